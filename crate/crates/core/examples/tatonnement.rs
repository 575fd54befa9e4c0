//! Price adjustment with asymmetric private forecasts, checked against the
//! joint dispatch that solves all producers' problems at once.
//!
//! `cargo run --release --example tatonnement [trace.csv]`

use std::fs::File;
use std::io::BufWriter;

use ccmkt::equilibrium::{joint_dispatch, tatonnement_traced, IterationTrace, TatonnementSettings};
use ccmkt::forecast::{draw_samples, summarize, ErrorDistribution};
use ccmkt::market::MarketConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = MarketConfig::two_producer_system();
    let dist = ErrorDistribution::normal(50.0)?;
    // Producer 1 has 10 samples, producer 2 has 1000.
    let summaries = vec![
        summarize(&draw_samples(&dist, 10, 11))?,
        summarize(&draw_samples(&dist, 1000, 22))?,
    ];
    for (i, s) in summaries.iter().enumerate() {
        println!(
            "producer {}: variance {:.2}, support [{:.2}, {:.2}]",
            i + 1,
            s.variance,
            s.w_lo,
            s.w_hi
        );
    }

    let settings = TatonnementSettings::default();
    let mut trace_file = std::env::args()
        .nth(1)
        .map(|path| File::create(path).map(BufWriter::new))
        .transpose()?;
    let trace = trace_file.as_mut().map(|out| IterationTrace { every: 10_000, out });
    let start = std::time::Instant::now();
    let eq = tatonnement_traced(&market, &summaries, &settings, trace)?;
    println!(
        "price iteration: {} iterations in {:.1?}, converged = {}",
        eq.iterations,
        start.elapsed(),
        eq.converged
    );

    let reference = joint_dispatch(&market, &summaries, settings.alpha_regularization)?;
    println!("producer,p,alpha,p_joint,alpha_joint");
    for (i, (a, b)) in eq.decisions.iter().zip(&reference.decisions).enumerate() {
        println!("{},{:.4},{:.4},{:.4},{:.4}", i + 1, a.p, a.alpha, b.p, b.alpha);
    }
    println!(
        "energy price {:.3} (joint {:.3}), reserve price {:.3} (joint {:.3})",
        eq.prices.energy, reference.prices.energy, eq.prices.reserve, reference.prices.reserve
    );
    if eq.reserve_shortfall {
        println!("reserve supply is exhausted: sum alpha = {:.4}", 1.0 + eq.reserve_residual);
    }
    Ok(())
}
