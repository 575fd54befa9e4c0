//! Chance-constrained electricity market equilibria with asymmetric,
//! sample-based forecasts.
//!
//! Producers hold private samples of the renewable forecast error. From them
//! each estimates a variance and a support interval, and enforces its limits
//! at the support endpoints while maximizing profit against energy and
//! reserve prices. Prices are found by iterative adjustment
//! ([`equilibrium::tatonnement`]); the resulting day-ahead decisions are then
//! stress-tested by cost-optimal real-time re-dispatch on out-of-sample
//! scenarios ([`evaluation`]). The [`harness`] module runs whole experiments
//! (sample-size sweeps, learning a beta model, data sharing) and writes CSV.
//!
//! Module map:
//!
//! - [`qp`]: exact active-set solver for tiny dense convex QPs
//! - [`market`]: producer data and the producer best response
//! - [`forecast`]: sampling, summaries, beta MLE, pooling
//! - [`equilibrium`]: price iteration and the centralized reference
//! - [`evaluation`]: re-dispatch, reliability, CVaR, payoffs
//! - [`harness`]: configuration, seeds, experiment loops, CSV output

pub mod equilibrium;
pub mod evaluation;
pub mod forecast;
pub mod harness;
pub mod market;
pub mod qp;

pub use equilibrium::{centralized_dispatch, joint_dispatch, tatonnement, EquilibriumResult, TatonnementSettings};
pub use evaluation::{cvar, evaluate_out_of_sample, redispatch, RedispatchOutcome, RunStatistics};
pub use forecast::{draw_samples, summarize, ErrorDistribution, ForecastDataset};
pub use market::{ForecastSummary, MarketConfig, Prices, ProducerDecision, ProducerParams};
