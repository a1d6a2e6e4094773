//! Reservoir downsampling, windowed aggregation and step alignment of two series.

use fairboard::aggregation::{
    align, reservoir_downsample, window_aggregate, AlignMode, ColumnRef, ScalarSeries, WindowStat,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let loss = ScalarSeries::from_values("loss", (0..10_000u64).map(|s| (s, 1.0 / (1.0 + s as f64 / 500.0))));
    let acc = ScalarSeries::from_values(
        "accuracy",
        (0..10_000u64)
            .step_by(250)
            .map(|s| (s, 1.0 - 0.4 * (-(s as f64) / 3000.0).exp())),
    );

    let sampled = reservoir_downsample(&loss, 12, 7)?;
    println!("reservoir (k=12, seed 7), first and last always kept:");
    for p in &sampled.points {
        println!("  step {:>5}  {:.4}", p.step, p.value);
    }

    let means = window_aggregate(&loss, 2_500, WindowStat::Mean)?;
    println!("mean per 2500-step window:");
    for p in &means.points {
        println!("  [{:>5}, {:>5})  {:.4}", p.step, p.step + 2_500, p.value);
    }

    let cols = [ColumnRef::new("run", "loss"), ColumnRef::new("run", "accuracy")];
    let table = align(&cols, &[&loss, &acc], AlignMode::Intersect);
    println!("intersect alignment: {} shared steps; first rows:", table.steps.len());
    for (i, step) in table.steps.iter().take(4).enumerate() {
        println!(
            "  step {:>5}  loss {:.4}  accuracy {:.4}",
            step,
            table.columns[0].values[i].unwrap(),
            table.columns[1].values[i].unwrap()
        );
    }
    Ok(())
}
