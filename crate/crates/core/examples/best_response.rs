//! One producer's profit-maximizing day-ahead offer as the energy price
//! moves, for a narrow and a wide view of the forecast error.
//!
//! `cargo run --release --example best_response`

use ccmkt::market::{best_response, expected_cost, ForecastSummary, MarketConfig, Prices};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = MarketConfig::two_producer_system();
    let producer = market.producers[0];
    let views = [
        ("narrow", ForecastSummary::new(20.0, -8.0, 9.0)?),
        ("wide", ForecastSummary::new(50.0, -22.0, 21.0)?),
    ];
    let reserve_price = -500.0;

    println!("view,energy_price,p,alpha,expected_cost");
    for (name, summary) in &views {
        for energy in [20.0, 40.0, 60.0, 80.0, 100.0] {
            let d = best_response(&producer, summary, &Prices::new(energy, reserve_price), 1e-9)?;
            println!(
                "{name},{energy},{:.3},{:.4},{:.2}",
                d.p,
                d.alpha,
                expected_cost(&producer, &d, summary)
            );
        }
    }
    println!();
    println!(
        "A wider support forces more headroom: p + alpha * |w_lo| <= {} and alpha * |w| <= {}.",
        producer.p_max, producer.r_max
    );
    Ok(())
}
