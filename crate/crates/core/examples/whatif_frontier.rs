//! Sweeps a per-group decision threshold and prints the accuracy / gap trade-off.

use std::collections::BTreeMap;

use fairboard::fairness::{fairness_report, select_records, what_if_reconfigure, EnvFilter, ReportOptions};
use fairboard::ingest::load_run;
use fairboard::synthgen::{generate_scenario, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let dir = generate_scenario(Scenario::Baseline, out.path(), 0, None)?.remove(0);
    let run = load_run(&dir)?;
    let (records, _) = select_records(&run.predictions, EnvFilter::In, None);
    let axes = ["gender", "lighting"];
    let options = ReportOptions::default();
    let plain = fairness_report(&records, &axes, &options)?;
    let worst = plain.disparity.worst_group.clone().expect("at least two groups");

    println!("adjusting threshold for {}", worst.label());
    println!("{:>9} {:>10} {:>10} {:>8}", "threshold", "group acc", "overall", "gap");
    for t in [0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6] {
        let report = what_if_reconfigure(&records, &axes, &BTreeMap::from([(worst.clone(), t)]), &options)?;
        println!(
            "{t:>9.2} {:>10.3} {:>10.3} {:>8.3}",
            report.group(&worst).unwrap().accuracy.unwrap(),
            report.overall.accuracy.unwrap(),
            report.disparity.metric_gap.unwrap()
        );
    }
    Ok(())
}
