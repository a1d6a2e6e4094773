//! Per-environment group metrics: in-distribution splits versus the shifted split.

use fairboard::fairness::{stability_report, ReportOptions};
use fairboard::ingest::load_run;
use fairboard::synthgen::{generate_scenario, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let dir = generate_scenario(Scenario::Baseline, out.path(), 0, None)?.remove(0);
    let run = load_run(&dir)?;
    let report = stability_report(
        &run.predictions,
        &["gender", "lighting"],
        None,
        None,
        &ReportOptions::default(),
    )?;

    print!("{:<10} {:>5} {:>6}", "env", "epoch", "gap");
    for g in &report.group_order {
        print!(" {:>34}", g.label());
    }
    println!();
    for (section, radar) in report.envs.iter().zip(&report.radar) {
        print!(
            "{:<10} {:>5} {:>6}",
            section.env.as_str(),
            section.epoch,
            section.gap.map_or("n/a".into(), |g| format!("{g:.3}"))
        );
        for v in &radar.values {
            print!(" {:>34}", v.map_or("-".into(), |v| format!("{v:.3}")));
        }
        println!();
    }
    if !report.absent_envs.is_empty() {
        println!("absent: {:?}", report.absent_envs);
    }
    Ok(())
}
