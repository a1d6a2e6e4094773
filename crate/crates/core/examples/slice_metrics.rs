//! Disaggregated classification metrics over a two-attribute partition.

use std::collections::BTreeMap;

use fairboard::ingest::{Env, PredictionRecord};
use fairboard::slicing::{classification_metrics, partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<PredictionRecord> = (0..2_000)
        .map(|i| {
            let site = ["clinic_a", "clinic_b"][i % 2];
            let age = ["<40", "40+"][rng.gen_range(0..2)];
            let label = rng.gen_bool(0.3);
            // clinic_b scores are noisier.
            let noise: f64 = if site == "clinic_b" { 0.45 } else { 0.3 };
            let score = (if label { 0.7 } else { 0.3 } + rng.gen_range(-noise..noise)).clamp(0.0, 1.0);
            let attrs = BTreeMap::from([("site".into(), site.into()), ("age".into(), age.into())]);
            PredictionRecord::classification(format!("r{i}"), 1, Env::InTest, attrs, score, label)
        })
        .collect();

    println!(
        "{:<28} {:>5} {:>8} {:>6} {:>6} {:>6}",
        "group", "n", "accuracy", "tpr", "fpr", "auc"
    );
    for (key, members) in partition(&records, &["site", "age"])? {
        let m = classification_metrics(members, 0.5)?;
        let f = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
        println!(
            "{:<28} {:>5} {:>8} {:>6} {:>6} {:>6}",
            key.label(),
            m.n,
            f(m.accuracy),
            f(m.tpr),
            f(m.fpr),
            f(m.auc)
        );
    }
    Ok(())
}
