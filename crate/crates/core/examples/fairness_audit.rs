//! Generates the baseline scenario and prints its disparity summary.

use fairboard::fairness::{fairness_report, select_records, EnvFilter, ReportOptions};
use fairboard::ingest::load_run;
use fairboard::synthgen::{generate_scenario, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let dir = generate_scenario(Scenario::Baseline, out.path(), 0, None)?.remove(0);
    let run = load_run(&dir)?;
    let (records, epoch) = select_records(&run.predictions, EnvFilter::In, None);
    let report = fairness_report(&records, &["gender", "lighting"], &ReportOptions::default())?;

    println!(
        "run {} epoch {} ({} in-distribution records)",
        run.run_id,
        epoch.unwrap(),
        records.len()
    );
    for g in &report.groups {
        println!(
            "  {:<36} n={:<5} accuracy {:.3}",
            g.group.label(),
            g.n,
            g.accuracy.unwrap()
        );
    }
    let d = &report.disparity;
    let show = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
    println!("overall accuracy {}", show(report.overall.accuracy));
    println!(
        "{} gap {}  dp {}  eo {}",
        d.metric,
        show(d.metric_gap),
        show(d.dp_gap),
        show(d.eo_diff)
    );
    if let (Some(best), Some(worst)) = (&d.best_group, &d.worst_group) {
        println!("best {}  worst {}", best.label(), worst.label());
    }
    Ok(())
}
