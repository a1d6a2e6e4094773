//! IoU matching and 101-point average precision on a small detection fixture.

use fairboard::slicing::{average_precision, detection_metrics, match_detections, partition};
use fairboard::synthgen::detection_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = detection_fixture();
    let iou = fixture.truth.iou_threshold;

    let matched = match_detections(&fixture.records, iou)?;
    for (class, m) in &matched.per_class {
        let ap = average_precision(m).map_or("n/a (no ground truth)".into(), |ap| format!("{ap:.4}"));
        println!(
            "class {class}: {} detections, {} TP, {} GT, AP {ap}",
            m.detections.len(),
            m.tp_count(),
            m.gt_count
        );
    }
    println!(
        "overall mAP @ IoU {iou}: {:.4}",
        detection_metrics(&fixture.records, iou)?.ap.unwrap()
    );

    for (key, members) in partition(&fixture.records, &fixture.axes)? {
        let m = detection_metrics(members, iou)?;
        println!(
            "{:<16} mAP {}",
            key.label(),
            m.ap.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}
