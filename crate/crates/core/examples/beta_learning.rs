//! Learning a beta model from ten samples: maximum likelihood shapes,
//! synthetic augmentation, and how the support estimate changes.
//!
//! `cargo run --release --example beta_learning`

use ccmkt::forecast::{draw_samples, fit_beta_mle, learn_and_augment, summarize, ErrorDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dist = ErrorDistribution::scaled_beta(5.0, 10.0, 65.0, true)?;
    let ErrorDistribution::ScaledBeta { scale, .. } = dist else {
        unreachable!()
    };
    let offset = dist.offset();
    let truth = summarize(&draw_samples(&dist, 300_000, 1))?;
    println!(
        "population (300000 draws): variance {:.2}, support [{:.2}, {:.2}]",
        truth.variance, truth.w_lo, truth.w_hi
    );

    println!("seed,alpha_hat,beta_hat,raw_variance,raw_w_lo,raw_w_hi,learned_variance,learned_w_lo,learned_w_hi");
    for seed in 0..5 {
        let data = draw_samples(&dist, 10, 100 + seed);
        let raw = summarize(&data)?;
        let fit = fit_beta_mle(&data, scale, offset)?;
        let learned = summarize(&learn_and_augment(&data, &fit, 300_000, 200 + seed))?;
        println!(
            "{seed},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
            fit.alpha_hat,
            fit.beta_hat,
            raw.variance,
            raw.w_lo,
            raw.w_hi,
            learned.variance,
            learned.w_lo,
            learned.w_hi
        );
    }
    Ok(())
}
