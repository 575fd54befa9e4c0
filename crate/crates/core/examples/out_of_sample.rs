//! Real-time re-dispatch of a day-ahead schedule and the out-of-sample
//! indicators: reliability, mean cost, CVaR and producer payoffs.
//!
//! `cargo run --release --example out_of_sample`

use ccmkt::equilibrium::centralized_dispatch;
use ccmkt::evaluation::{cvar, evaluate_out_of_sample, redispatch, write_scenario_dump};
use ccmkt::forecast::{draw_samples, summarize, ErrorDistribution, ForecastDataset};
use ccmkt::market::MarketConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = MarketConfig::two_producer_system();

    println!("single scenarios around the schedule (32, 18):");
    for w in [-25.0, -5.0, 0.0, 5.0, 25.0] {
        let o = redispatch(&market, &[32.0, 18.0], w)?;
        println!(
            "  w = {w:>6}: r = ({:>6.2}, {:>6.2}), spill {:>5.2}, shed {:>5.2}, cost {:>8.2}",
            o.adjustments[0], o.adjustments[1], o.spillage, o.shedding, o.total_cost
        );
    }

    let dist = ErrorDistribution::normal(50.0)?;
    let scenarios = draw_samples(&dist, 10_000, 99);
    // The last line is the reference: every producer knows the summary of
    // the very scenarios the schedule is evaluated on.
    let cases = [
        ("shared data of size 10", summarize(&draw_samples(&dist, 10, 7))?),
        ("shared data of size 1000", summarize(&draw_samples(&dist, 1000, 7))?),
        ("reference (full scenario set)", summarize(&scenarios)?),
    ];
    for (label, summary) in cases {
        let eq = centralized_dispatch(&market, &summary)?;
        let stats = evaluate_out_of_sample(&market, &eq, &scenarios)?;
        println!(
            "{label}: p = ({:.2}, {:.2}), reliability {:.4}, mean cost {:.1}, CVaR5 {:.1}, payoffs ({:.1}, {:.1})",
            eq.decisions[0].p,
            eq.decisions[1].p,
            stats.reliability,
            stats.mean_cost,
            stats.cvar5,
            stats.payoffs_mean[0],
            stats.payoffs_mean[1]
        );
    }

    let costs: Vec<f64> = (1..=100).map(f64::from).collect();
    println!("CVaR of 1..100 at 5%: {}", cvar(&costs, 0.05)?);

    let few = ForecastDataset::new(vec![-30.0, -12.0, 0.0, 12.0, 30.0], 0);
    println!("per-scenario dump:");
    write_scenario_dump(&market, &[32.0, 18.0], &few, std::io::stdout().lock())?;
    Ok(())
}
