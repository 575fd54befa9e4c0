//! Market equilibrium by price adjustment, and the centralized reference.
//!
//! Each iteration every producer best-responds to the current prices (all
//! against the same iterate), then both prices move against the aggregate
//! imbalance:
//!
//! ```text
//!     energy  <- energy  - rho  * (sum p + w_f - L)
//!     reserve <- reserve + step * (sum alpha - 1)
//! ```
//!
//! The reserve price is a charge on `alpha` in the producer objective, so it
//! moves *up* on oversupply. The reserve step is either `rho` or, by default,
//! the reciprocal of the summed reserve curvatures the producers report,
//! which clears the reserve market in one step whenever no producer limit
//! binds.
//!
//! When the producers' limits cannot cover the whole error (`sum alpha < 1`
//! at any price), a market with a reserve price cap clears short: the price
//! iteration is projected onto `[-cap, inf)`, and once converged the reported
//! reserve price is the least extreme price at which the producers still
//! offer their maximum. Every price beyond it supports the same allocation,
//! so this choice keeps the cap itself out of the results.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    producer_rows, BestResponder, reserve_curvature, ForecastSummary, MarketConfig, MarketError, Prices,
    ProducerDecision, DEFAULT_ALPHA_REGULARIZATION,
};
use crate::qp::{solve_qp, QpError, QpProblem, DEFAULT_REGULARIZATION, MAX_VARS};

/// Shortfall below which a centralized solution is not reported as short.
const SHORTFALL_TOL: f64 = 1e-7;
/// Reserve offers within this of the maximum count as unchanged when
/// locating the scarcity price.
const SUPPLY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("producer {index} has no feasible response: {source}")]
    ProducerInfeasible { index: usize, source: MarketError },
    #[error("the system cannot cover load and reserve")]
    Infeasible,
    #[error("dispatch problem: {0}")]
    Qp(QpError),
    #[error("writing iteration trace: {0}")]
    Trace(#[from] std::io::Error),
}

/// How the reserve price step is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReserveStep {
    /// The energy step `rho`.
    Gradient,
    /// `1 / sum_i (1 / reserve curvature_i)`.
    #[default]
    CurvatureScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TatonnementSettings {
    /// Energy price step, $/MWh per MW of imbalance.
    pub rho: f64,
    /// Threshold on both imbalances.
    pub tol: f64,
    pub max_iter: u64,
    pub initial_prices: Prices,
    pub reserve_step: ReserveStep,
    pub alpha_regularization: f64,
}

impl Default for TatonnementSettings {
    fn default() -> Self {
        Self {
            rho: 1e-5,
            tol: 1e-3,
            max_iter: 20_000_000,
            initial_prices: Prices::default(),
            reserve_step: ReserveStep::default(),
            alpha_regularization: DEFAULT_ALPHA_REGULARIZATION,
        }
    }
}

impl TatonnementSettings {
    pub fn validate(&self) -> Result<(), EquilibriumError> {
        let bad = |msg: String| Err(EquilibriumError::InvalidSettings(msg));
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad(format!("rho={} must be > 0", self.rho));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol={} must be > 0", self.tol));
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1".into());
        }
        if !(self.initial_prices.energy.is_finite() && self.initial_prices.reserve.is_finite()) {
            return bad("initial prices must be finite".into());
        }
        if !(self.alpha_regularization.is_finite() && self.alpha_regularization > 0.0) {
            return bad(format!(
                "alpha_regularization={} must be > 0",
                self.alpha_regularization
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub decisions: Vec<ProducerDecision>,
    /// Prices the decisions respond to.
    pub prices: Prices,
    pub iterations: u64,
    /// `sum p + w_f - L`, MW.
    pub energy_residual: f64,
    /// `sum alpha - 1`.
    pub reserve_residual: f64,
    pub converged: bool,
    /// Reserve supply is exhausted (`sum alpha < 1`); the reserve price is the
    /// scarcity price.
    pub reserve_shortfall: bool,
}

impl EquilibriumResult {
    pub fn nominal_dispatch(&self) -> Vec<f64> {
        self.decisions.iter().map(|d| d.p).collect()
    }
}

/// Periodic CSV trace of the price iteration.
pub struct IterationTrace<'a> {
    pub every: u64,
    pub out: &'a mut dyn Write,
}

pub const TRACE_HEADER: &str = "iter,lambda_e,lambda_r,energy_residual,reserve_residual";

fn check_inputs(config: &MarketConfig, summaries: &[ForecastSummary]) -> Result<(), EquilibriumError> {
    config
        .validate()
        .map_err(|e| EquilibriumError::InvalidInput(e.to_string()))?;
    if summaries.len() != config.producers.len() {
        return Err(EquilibriumError::InvalidInput(format!(
            "{} summaries for {} producers",
            summaries.len(),
            config.producers.len()
        )));
    }
    Ok(())
}

/// Price-adjustment equilibrium with one private summary per producer.
pub fn tatonnement(
    config: &MarketConfig,
    summaries: &[ForecastSummary],
    settings: &TatonnementSettings,
) -> Result<EquilibriumResult, EquilibriumError> {
    tatonnement_traced(config, summaries, settings, None)
}

/// [`tatonnement`] that also appends every `trace.every`-th iterate
/// (starting with the first) to a CSV trace.
pub fn tatonnement_traced(
    config: &MarketConfig,
    summaries: &[ForecastSummary],
    settings: &TatonnementSettings,
    mut trace: Option<IterationTrace<'_>>,
) -> Result<EquilibriumResult, EquilibriumError> {
    check_inputs(config, summaries)?;
    settings.validate()?;
    if let Some(t) = trace.as_mut() {
        if t.every == 0 {
            return Err(EquilibriumError::InvalidSettings("trace interval must be >= 1".into()));
        }
        writeln!(t.out, "{TRACE_HEADER}")?;
    }

    let reg = settings.alpha_regularization;
    let reserve_step = match settings.reserve_step {
        ReserveStep::Gradient => settings.rho,
        ReserveStep::CurvatureScaled => {
            let slope: f64 = config
                .producers
                .iter()
                .zip(summaries)
                .map(|(p, s)| 1.0 / reserve_curvature(p, s, reg))
                .sum();
            1.0 / slope
        }
    };
    let cap = config.reserve_price_cap;
    let project = |r: f64| cap.map_or(r, |c| r.max(-c));

    let mut prices = settings.initial_prices;
    prices.reserve = project(prices.reserve);
    let mut decisions = vec![ProducerDecision { p: 0.0, alpha: 0.0 }; config.producers.len()];
    let mut responders = config
        .producers
        .iter()
        .zip(summaries)
        .enumerate()
        .map(|(index, (params, summary))| {
            BestResponder::new(params, summary, reg)
                .map_err(|source| EquilibriumError::ProducerInfeasible { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut iter = 0;
    loop {
        iter += 1;
        for (index, (responder, slot)) in responders.iter_mut().zip(decisions.iter_mut()).enumerate() {
            *slot = responder
                .respond(&prices)
                .map_err(|source| EquilibriumError::ProducerInfeasible { index, source })?;
        }
        let energy_residual = decisions.iter().map(|d| d.p).sum::<f64>() + config.wind_forecast - config.load;
        let reserve_residual = decisions.iter().map(|d| d.alpha).sum::<f64>() - 1.0;
        let reserve_shortfall = cap.is_some_and(|c| prices.reserve <= -c) && reserve_residual < 0.0;

        if let Some(t) = trace.as_mut() {
            if (iter - 1) % t.every == 0 {
                writeln!(
                    t.out,
                    "{iter},{},{},{energy_residual},{reserve_residual}",
                    prices.energy, prices.reserve
                )?;
            }
        }

        let converged = energy_residual.abs() <= settings.tol
            && (reserve_residual.abs() <= settings.tol || reserve_shortfall);
        if converged && reserve_shortfall {
            let (reserve, decisions) = scarcity_price(&mut responders, prices, cap.unwrap_or_default())?;
            return Ok(finish(
                config,
                decisions,
                Prices::new(prices.energy, reserve),
                iter,
                settings.tol,
                true,
            ));
        }
        if converged || iter >= settings.max_iter {
            return Ok(EquilibriumResult {
                decisions,
                prices,
                iterations: iter,
                energy_residual,
                reserve_residual,
                converged,
                reserve_shortfall,
            });
        }
        prices.energy -= settings.rho * energy_residual;
        prices.reserve = project(prices.reserve + reserve_step * reserve_residual);
    }
}

fn finish(
    config: &MarketConfig,
    decisions: Vec<ProducerDecision>,
    prices: Prices,
    iterations: u64,
    tol: f64,
    reserve_shortfall: bool,
) -> EquilibriumResult {
    let energy_residual = decisions.iter().map(|d| d.p).sum::<f64>() + config.wind_forecast - config.load;
    let reserve_residual = decisions.iter().map(|d| d.alpha).sum::<f64>() - 1.0;
    EquilibriumResult {
        decisions,
        prices,
        iterations,
        energy_residual,
        reserve_residual,
        converged: energy_residual.abs() <= tol && (reserve_residual.abs() <= tol || reserve_shortfall),
        reserve_shortfall,
    }
}

fn respond_all(responders: &mut [BestResponder], prices: Prices) -> Result<Vec<ProducerDecision>, EquilibriumError> {
    responders
        .iter_mut()
        .enumerate()
        .map(|(index, r)| {
            r.respond(&prices)
                .map_err(|source| EquilibriumError::ProducerInfeasible { index, source })
        })
        .collect()
}

/// Bisects `[-cap, 0]` for the least extreme reserve price at which the total
/// reserve offer at `prices.energy` still equals the offer at `-cap`.
/// Returns that price and the responses to it.
fn scarcity_price(
    responders: &mut [BestResponder],
    prices: Prices,
    cap: f64,
) -> Result<(f64, Vec<ProducerDecision>), EquilibriumError> {
    let offer = |d: &[ProducerDecision]| d.iter().map(|d| d.alpha).sum::<f64>();
    let at = |responders: &mut [BestResponder], reserve: f64| respond_all(responders, Prices::new(prices.energy, reserve));
    let mut lo_decisions = at(responders, -cap)?;
    let target = offer(&lo_decisions) - SUPPLY_TOL;
    let (mut lo, mut hi) = (-cap, 0.0);
    let top = at(responders, hi)?;
    if offer(&top) >= target {
        return Ok((hi, top));
    }
    while hi - lo > f64::EPSILON * cap {
        let mid = 0.5 * (lo + hi);
        let d = at(responders, mid)?;
        if offer(&d) >= target {
            lo = mid;
            lo_decisions = d;
        } else {
            hi = mid;
        }
    }
    Ok((lo, lo_decisions))
}

/// Cost-minimizing dispatch with every producer using `shared_summary`.
pub fn centralized_dispatch(
    config: &MarketConfig,
    shared_summary: &ForecastSummary,
) -> Result<EquilibriumResult, EquilibriumError> {
    let summaries = vec![*shared_summary; config.producers.len()];
    joint_dispatch(config, &summaries, DEFAULT_ALPHA_REGULARIZATION)
}

/// One QP over all `(p_i, alpha_i)` with producer `i` constrained by its own
/// summary and the balances as coupling equalities. With identical summaries
/// this is the centralized dispatch; with private summaries its solution is
/// the equilibrium the price iteration converges to, which makes it a direct
/// reference for [`tatonnement`]. Prices are read off the equality duals.
pub fn joint_dispatch(
    config: &MarketConfig,
    summaries: &[ForecastSummary],
    alpha_regularization: f64,
) -> Result<EquilibriumResult, EquilibriumError> {
    check_inputs(config, summaries)?;
    let count = config.producers.len();
    let capped = config.reserve_price_cap;
    let n = 2 * count + usize::from(capped.is_some());
    if n > MAX_VARS {
        return Err(EquilibriumError::Qp(QpError::DimensionLimit {
            n,
            m: 5 * count + 1,
            k: 2,
        }));
    }

    let mut diag = vec![0.0; n];
    let mut linear = vec![0.0; n];
    let mut energy_row = vec![0.0; n];
    let mut reserve_row = vec![0.0; n];
    for (i, (params, summary)) in config.producers.iter().zip(summaries).enumerate() {
        diag[2 * i] = 2.0 * params.c2;
        diag[2 * i + 1] = reserve_curvature(params, summary, alpha_regularization);
        linear[2 * i] = params.c1;
        energy_row[2 * i] = 1.0;
        reserve_row[2 * i + 1] = 1.0;
    }
    if let Some(c) = capped {
        diag[n - 1] = DEFAULT_REGULARIZATION;
        linear[n - 1] = c;
        reserve_row[n - 1] = 1.0;
    }

    let mut builder = QpProblem::builder(n)
        .hessian_diag(&diag)
        .linear(&linear)
        .eq(&energy_row, config.net_load())
        .eq(&reserve_row, 1.0);
    if capped.is_some() {
        let mut row = vec![0.0; n];
        row[n - 1] = -1.0;
        builder = builder.ineq(&row, 0.0);
    }
    for (i, (params, summary)) in config.producers.iter().zip(summaries).enumerate() {
        for (row, rhs) in producer_rows(params, summary, n, 2 * i, 2 * i + 1) {
            builder = builder.ineq(&row[..n], rhs);
        }
    }
    let qp = builder.build().map_err(EquilibriumError::Qp)?;
    let sol = solve_qp(&qp, 0.0).map_err(|e| match e {
        QpError::Infeasible => EquilibriumError::Infeasible,
        other => EquilibriumError::Qp(other),
    })?;

    let x = sol.x();
    let decisions: Vec<ProducerDecision> = (0..count)
        .map(|i| ProducerDecision {
            p: x[2 * i],
            alpha: x[2 * i + 1],
        })
        .collect();
    let energy_residual = decisions.iter().map(|d| d.p).sum::<f64>() + config.wind_forecast - config.load;
    let reserve_residual = decisions.iter().map(|d| d.alpha).sum::<f64>() - 1.0;
    let duals = sol.duals_eq();
    let prices = Prices::new(-duals[0], duals[1]);
    if let Some(cap) = capped.filter(|_| x[n - 1] > SHORTFALL_TOL) {
        // Same price rule as the iteration: the slack's cost only bounds the
        // search.
        let mut responders = config
            .producers
            .iter()
            .zip(summaries)
            .enumerate()
            .map(|(index, (params, summary))| {
                BestResponder::new(params, summary, alpha_regularization)
                    .map_err(|source| EquilibriumError::ProducerInfeasible { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (reserve, _) = scarcity_price(&mut responders, prices, cap)?;
        return Ok(EquilibriumResult {
            decisions,
            prices: Prices::new(prices.energy, reserve),
            iterations: 1,
            energy_residual,
            reserve_residual,
            converged: true,
            reserve_shortfall: true,
        });
    }
    Ok(EquilibriumResult {
        decisions,
        prices,
        iterations: 1,
        energy_residual,
        reserve_residual,
        converged: true,
        reserve_shortfall: false,
    })
}
