//! Producers pooling their private samples versus keeping them, evaluated
//! on the same out-of-sample scenarios.
//!
//! `cargo run --release --example data_sharing`

use ccmkt::harness::{run_experiment, ExperimentConfig, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ExperimentConfig {
        sample_sizes: vec![30],
        runs: 3,
        oos_count: 5000,
        ..ExperimentConfig::default()
    };
    println!("mode,reliability,payoff_1,payoff_2,variance_dissimilarity");
    for mode in [Mode::Baseline, Mode::Sharing] {
        let config = ExperimentConfig { mode, ..base.clone() };
        let out = run_experiment(&config)?;
        let a = &out.aggregates[0];
        println!(
            "{mode},{:.4},{:.1},{:.1},{:.3}",
            a.reliability.mean, a.payoffs[0].mean, a.payoffs[1].mean, a.dissimilarities[0].variance
        );
    }
    Ok(())
}
