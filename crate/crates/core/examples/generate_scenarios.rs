//! Generates every built-in scenario and checks each run against its truth file.
//!
//! `cargo run --example generate_scenarios [out_dir]` keeps the output.

use fairboard::synthgen::{generate_scenario, verify, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| tmp.path().to_path_buf(), Into::into);
    for scenario in Scenario::ALL.into_iter().filter(|s| *s != Scenario::Custom) {
        for dir in generate_scenario(scenario, &out, 0, None)? {
            let report = verify(&dir)?;
            let status = if report.passed() { "PASS" } else { "FAIL" };
            println!(
                "{status} {:<10} {:<12} {} checks",
                scenario.as_str(),
                report.run,
                report.checks
            );
            for m in &report.mismatches {
                println!("     {m:?}");
            }
        }
    }
    println!("runs written under {}", out.display());
    Ok(())
}
