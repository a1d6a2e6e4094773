//! IoU-matched detection evaluation with 101-point interpolated AP.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{GroupKey, GroupMetrics, MetricsError};
use crate::ingest::{BBox, Outcome, PredictionRecord};

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, MetricsError> {
    for bx in [a, b] {
        if !bx.is_valid() {
            return Err(MetricsError::DegenerateBox(format!("{bx:?}")));
        }
    }
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / (a.area() + b.area() - inter))
}

/// Scored match outcomes for one class, in descending score order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassMatches {
    /// `(score, is_true_positive)`.
    pub detections: Vec<(f64, bool)>,
    pub gt_count: usize,
}

impl ClassMatches {
    pub fn tp_count(&self) -> usize {
        self.detections.iter().filter(|d| d.1).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionMatchResult {
    pub per_class: BTreeMap<u32, ClassMatches>,
}

impl DetectionMatchResult {
    /// Mean AP over classes that have ground truth. `None` if no class does.
    pub fn mean_average_precision(&self) -> Option<f64> {
        let aps: Vec<f64> = self
            .per_class
            .values()
            .filter_map(|m| average_precision(m).ok())
            .collect();
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

/// Greedy score-ordered matching of predictions to ground truth within each record.
///
/// Per class, a record's predictions are visited by descending score (ties in
/// input order) and each takes the still-unmatched ground-truth box of the same
/// class with the highest IoU at or above `iou_threshold`. Outcomes from all
/// records are then merged by descending score, again stable by input order.
pub fn match_detections<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    iou_threshold: f64,
) -> Result<DetectionMatchResult, MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(MetricsError::InvalidThreshold(iou_threshold));
    }
    let mut per_class: BTreeMap<u32, ClassMatches> = BTreeMap::new();
    for r in records {
        let Outcome::Detection { pred, gt } = &r.outcome else {
            return Err(MetricsError::WrongTask {
                expected: "detection",
                found: "classification",
            });
        };
        let mut classes: Vec<u32> = pred.iter().map(|p| p.class).chain(gt.iter().map(|g| g.class)).collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let gts: Vec<&BBox> = gt.iter().filter(|g| g.class == class).map(|g| &g.bbox).collect();
            let mut preds: Vec<_> = pred.iter().filter(|p| p.class == class).collect();
            preds.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut taken = vec![false; gts.len()];
            let entry = per_class.entry(class).or_default();
            entry.gt_count += gts.len();
            for p in preds {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g) in gts.iter().enumerate() {
                    if taken[gi] {
                        continue;
                    }
                    let o = iou(&p.bbox, g)?;
                    if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                        best = Some((gi, o));
                    }
                }
                if let Some((gi, _)) = best {
                    taken[gi] = true;
                }
                entry.detections.push((p.score, best.is_some()));
            }
        }
    }
    for m in per_class.values_mut() {
        m.detections.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    Ok(DetectionMatchResult { per_class })
}

/// Number of recall sample points used for interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// 101-point interpolated average precision for one class.
///
/// Precision is replaced by its running maximum from the right (the envelope);
/// at each recall level `r in {0.00, 0.01, ..., 1.00}` the envelope is read at
/// the first rank whose recall reaches `r`, contributing zero if none does.
pub fn average_precision(matches: &ClassMatches) -> Result<f64, MetricsError> {
    if matches.gt_count == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let gt = matches.gt_count as f64;
    let mut recall = Vec::with_capacity(matches.detections.len());
    let mut precision = Vec::with_capacity(matches.detections.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, is_tp) in &matches.detections {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / gt);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < level);
        if let Some(&p) = precision.get(idx) {
            sum += p;
        }
    }
    Ok(sum / RECALL_POINTS as f64)
}

/// Group metrics for detection records: `ap` holds the mAP over classes.
pub fn detection_metrics<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    iou_threshold: f64,
) -> Result<GroupMetrics, MetricsError> {
    let records: Vec<&PredictionRecord> = records.into_iter().collect();
    let matched = match_detections(records.iter().copied(), iou_threshold)?;
    let mut m = GroupMetrics::empty(GroupKey::all(), records.len());
    m.ap = matched.mean_average_precision();
    let (tp, gt, det) = matched.per_class.values().fold((0, 0, 0), |acc, c| {
        (acc.0 + c.tp_count(), acc.1 + c.gt_count, acc.2 + c.detections.len())
    });
    if gt > 0 {
        m.recall = Some(tp as f64 / gt as f64);
        m.tpr = m.recall;
    }
    if det > 0 {
        m.precision = Some(tp as f64 / det as f64);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Env, GtBox, PredBox};
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    fn det(pred: Vec<(BBox, f64)>, gt: Vec<BBox>) -> PredictionRecord {
        PredictionRecord {
            example_id: "img".into(),
            epoch: 0,
            env: Env::InVal,
            attributes: Default::default(),
            outcome: Outcome::Detection {
                pred: pred
                    .into_iter()
                    .map(|(bbox, score)| PredBox { bbox, score, class: 0 })
                    .collect(),
                gt: gt.into_iter().map(|bbox| GtBox { bbox, class: 0 }).collect(),
            },
        }
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        assert!((iou(&a, &b(1.0, 0.0, 3.0, 2.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b(1.0, 1.0, 1.0, 2.0)).unwrap_err().code(), "DEGENERATE_BOX");
    }

    #[test]
    fn perfect_detector() {
        let boxes = vec![b(0.0, 0.0, 1.0, 1.0), b(2.0, 2.0, 4.0, 4.0)];
        let r = det(boxes.iter().map(|&x| (x, 0.9)).collect(), boxes.clone());
        let m = match_detections([&r], 0.5).unwrap();
        let c = &m.per_class[&0];
        assert_eq!(c.tp_count(), 2);
        assert_eq!(c.detections.len(), 2);
        assert_eq!(average_precision(c).unwrap(), 1.0);
    }

    #[test]
    fn single_consumption() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let r = det(
            vec![(b(0.0, 0.0, 10.0, 9.0), 0.6), (b(0.0, 0.0, 10.0, 9.5), 0.8)],
            vec![g],
        );
        let c = &match_detections([&r], 0.5).unwrap().per_class[&0];
        assert_eq!(c.detections, vec![(0.8, true), (0.6, false)]);
    }

    #[test]
    fn ap_hand_values() {
        let tp_first = ClassMatches {
            detections: vec![(0.9, true), (0.8, false)],
            gt_count: 1,
        };
        assert_eq!(average_precision(&tp_first).unwrap(), 1.0);
        // Envelope 0.5 at every recall level: 101 * 0.5 / 101.
        let fp_first = ClassMatches {
            detections: vec![(0.9, false), (0.8, true)],
            gt_count: 1,
        };
        assert_eq!(average_precision(&fp_first).unwrap(), 0.5);
        let none = ClassMatches {
            detections: vec![(0.9, false)],
            gt_count: 3,
        };
        assert_eq!(average_precision(&none).unwrap(), 0.0);
        let empty = ClassMatches {
            detections: vec![],
            gt_count: 2,
        };
        assert_eq!(average_precision(&empty).unwrap(), 0.0);
        let no_gt = ClassMatches {
            detections: vec![(0.9, false)],
            gt_count: 0,
        };
        assert_eq!(average_precision(&no_gt).unwrap_err().code(), "NO_GROUND_TRUTH");
        // Half recall at full precision: levels 0.00..=0.50 contribute 1.0 each.
        let half = ClassMatches {
            detections: vec![(0.9, true)],
            gt_count: 2,
        };
        assert_eq!(average_precision(&half).unwrap(), 51.0 / 101.0);
    }

    #[test]
    fn wrong_task_and_bad_threshold() {
        let c = PredictionRecord::classification("c", 0, Env::InVal, Default::default(), 0.5, true);
        assert_eq!(match_detections([&c], 0.5).unwrap_err().code(), "WRONG_TASK");
        let r = det(vec![], vec![]);
        assert_eq!(match_detections([&r], 1.0).unwrap_err().code(), "INVALID_THRESHOLD");
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0u8..8, 0u8..8, 1u8..5, 1u8..5)
            .prop_map(|(x, y, w, h)| b(f64::from(x), f64::from(y), f64::from(x + w), f64::from(y + h)))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_unit_only_on_identity(a in arb_box(), c in arb_box()) {
            let ab = iou(&a, &c).unwrap();
            prop_assert_eq!(ab, iou(&c, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == c);
        }

        #[test]
        fn ap_invariant_to_score_scaling(
            flags in prop::collection::vec(any::<bool>(), 0..15),
            extra_gt in 0usize..4,
            scale in 0.1f64..1.0,
        ) {
            let dets: Vec<(f64, bool)> = flags.iter().enumerate().map(|(i, &f)| (1.0 - i as f64 / 20.0, f)).collect();
            let gt = dets.iter().filter(|d| d.1).count() + extra_gt;
            prop_assume!(gt > 0);
            let a = ClassMatches { detections: dets.clone(), gt_count: gt };
            let scaled = ClassMatches { detections: dets.iter().map(|&(s, f)| (s * scale, f)).collect(), gt_count: gt };
            let ap = average_precision(&a).unwrap();
            prop_assert_eq!(ap, average_precision(&scaled).unwrap());
            prop_assert!((0.0..=1.0).contains(&ap));

            // A new true positive ranked first never lowers AP (it also needs its own GT).
            let mut top = vec![(2.0, true)];
            top.extend(dets);
            let better = ClassMatches { detections: top, gt_count: gt + 1 };
            prop_assert!(average_precision(&better).unwrap() + 1e-12 >= ap);
        }
    }
}
