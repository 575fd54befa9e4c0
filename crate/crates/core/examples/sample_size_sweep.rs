//! How the amount of private data shapes reliability and cost: a small
//! baseline sweep over sample sizes with CSV output.
//!
//! `cargo run --release --example sample_size_sweep [out_dir]`

use ccmkt::harness::{run_experiment_with, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig {
        sample_sizes: vec![10, 100, 1000],
        runs: 3,
        oos_count: 5000,
        output_dir: std::env::args().nth(1).map(Into::into),
        ..ExperimentConfig::default()
    };
    let out = run_experiment_with(&config, |row| {
        eprintln!("size {} run {} done ({} iterations)", row.sample_size, row.run, row.iterations);
    })?;
    println!("size,converged,reliability,mean_cost,cvar5,variance_dissimilarity,width_dissimilarity");
    for a in &out.aggregates {
        let d = &a.dissimilarities[0];
        println!(
            "{},{}/{},{:.4},{:.1},{:.1},{:.2},{:.2}",
            a.sample_size,
            a.converged,
            a.runs,
            a.reliability.mean,
            a.mean_cost.mean,
            a.cvar5.mean,
            d.variance,
            d.width
        );
    }
    Ok(())
}
