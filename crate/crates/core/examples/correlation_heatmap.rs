//! Pearson matrix over hyperparameter-sweep runs, aligned per pair.

use fairboard::aggregation::ColumnRef;
use fairboard::correlation::correlation_matrix;
use fairboard::ingest::discover_runs;
use fairboard::synthgen::{generate_scenario, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    generate_scenario(Scenario::LrCompare, out.path(), 0, None)?;
    let catalog = discover_runs(out.path())?;
    let columns: Vec<ColumnRef> = catalog
        .runs()
        .flat_map(|r| ["loss", "accuracy"].map(|t| ColumnRef::new(r.run_id.clone(), t)))
        .collect();
    let m = correlation_matrix(&columns, &catalog)?;

    let names: Vec<String> = m.labels.iter().map(|c| format!("{}/{}", c.run, c.tag)).collect();
    print!("{:>18}", "");
    for n in &names {
        print!(" {n:>18}");
    }
    println!();
    for (i, n) in names.iter().enumerate() {
        print!("{n:>18}");
        for j in 0..names.len() {
            print!(
                " {:>18}",
                m.get(i, j)
                    .map_or("n/a".into(), |r| format!("{r:+.3} (n={})", m.support[i][j]))
            );
        }
        println!();
    }
    Ok(())
}
