//! Out-of-sample evaluation of day-ahead decisions.
//!
//! For every realized forecast error the system re-dispatches producers at
//! minimum cost around their nominal set points, falling back on renewable
//! spillage and load shedding when adjustments cannot restore the balance.
//! A scenario that needs either slack counts as a violation.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::equilibrium::EquilibriumResult;
use crate::forecast::ForecastDataset;
use crate::market::{MarketConfig, Prices, ProducerDecision, ProducerParams};
use crate::qp::{solve_qp, QpError, QpProblem, DEFAULT_REGULARIZATION, MAX_INEQ, MAX_VARS};

/// Slack above this many MW counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-6;
/// Share of worst scenarios averaged by the tail statistic.
pub const CVAR_TAIL: f64 = 0.05;

const NOMINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("nominal dispatch of producer {index} ({p} MW) is outside its limits")]
    NominalOutOfBounds { index: usize, p: f64 },
    #[error("expected {expected} nominal set points, got {got}")]
    NominalCount { expected: usize, got: usize },
    #[error("scenario {w_s} MW makes realized renewable output negative")]
    InvalidScenario { w_s: f64 },
    #[error("re-dispatch problem is infeasible")]
    Infeasible,
    #[error("re-dispatch problem: {0}")]
    Qp(QpError),
    #[error("equilibrium did not converge; nothing to evaluate")]
    NotConverged,
    #[error("empty input")]
    EmptyInput,
    #[error("tail fraction {0} must lie in (0, 1]")]
    InvalidTail(f64),
}

/// Real-time recourse for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RedispatchOutcome {
    /// Adjustment of each producer, MW.
    pub adjustments: Vec<f64>,
    /// Renewable spillage, MW.
    pub spillage: f64,
    /// Load shedding, MW.
    pub shedding: f64,
    /// `spill_cost * spillage + shed_cost * shedding`, $.
    pub emergency_cost: f64,
    /// Production plus emergency cost, $.
    pub total_cost: f64,
    pub violated: bool,
}

impl RedispatchOutcome {
    /// `sum r + shedding + w_s - spillage`; zero up to solver accuracy.
    pub fn balance_residual(&self, w_s: f64) -> f64 {
        self.adjustments.iter().sum::<f64>() + self.shedding + w_s - self.spillage
    }
}

/// Aggregated out-of-sample indicators of one equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStatistics {
    /// Share of scenarios without spillage or shedding.
    pub reliability: f64,
    pub mean_cost: f64,
    /// Mean cost of the worst 5% of scenarios.
    pub cvar5: f64,
    /// Average payoff of each producer.
    pub payoffs_mean: Vec<f64>,
    pub violations: usize,
    pub scenarios: usize,
    /// Per-scenario payoffs (`[scenario][producer]`), when requested.
    pub payoffs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvaluationOptions {
    pub keep_scenario_payoffs: bool,
}

/// Minimum-cost recourse for realized forecast error `w_s` around the nominal
/// dispatch.
pub fn redispatch(config: &MarketConfig, nominal: &[f64], w_s: f64) -> Result<RedispatchOutcome, EvaluationError> {
    let count = config.producers.len();
    if nominal.len() != count {
        return Err(EvaluationError::NominalCount {
            expected: count,
            got: nominal.len(),
        });
    }
    for (index, (params, &p)) in config.producers.iter().zip(nominal).enumerate() {
        if !(p >= params.p_min - NOMINAL_TOL && p <= params.p_max + NOMINAL_TOL) {
            return Err(EvaluationError::NominalOutOfBounds { index, p });
        }
    }
    if !(w_s.is_finite() && w_s >= -config.wind_forecast) {
        return Err(EvaluationError::InvalidScenario { w_s });
    }

    let qp = build_redispatch_qp(config, nominal, w_s)?;
    let sol = solve_qp(&qp, 0.0).map_err(|e| match e {
        QpError::Infeasible => EvaluationError::Infeasible,
        other => EvaluationError::Qp(other),
    })?;
    let x = sol.x();
    let adjustments = x[..count].to_vec();
    let spillage = x[count].max(0.0);
    let shedding = x[count + 1].max(0.0);
    let production: f64 = config
        .producers
        .iter()
        .zip(nominal)
        .zip(&adjustments)
        .map(|((params, p), r)| params.production_cost(p + r))
        .sum();
    let emergency_cost = config.spill_cost * spillage + config.shed_cost * shedding;
    Ok(RedispatchOutcome {
        adjustments,
        spillage,
        shedding,
        emergency_cost,
        total_cost: production + emergency_cost,
        violated: spillage > VIOLATION_TOL || shedding > VIOLATION_TOL,
    })
}

/// Variables `(r_1..r_n, spill, shed)`. Slack lower bounds come first so the
/// common no-emergency active set is reached early in the enumeration.
fn build_redispatch_qp(config: &MarketConfig, nominal: &[f64], w_s: f64) -> Result<QpProblem, EvaluationError> {
    let count = config.producers.len();
    let n = count + 2;
    let m = 4 * count + 4;
    if n > MAX_VARS || m > MAX_INEQ {
        return Err(EvaluationError::Qp(QpError::DimensionLimit { n, m, k: 1 }));
    }
    let (spill, shed) = (count, count + 1);
    let unit = |j: usize, v: f64| {
        let mut row = [0.0; MAX_VARS];
        row[j] = v;
        row
    };

    let mut diag = [0.0; MAX_VARS];
    let mut linear = [0.0; MAX_VARS];
    let mut balance = [0.0; MAX_VARS];
    for (i, (params, &p)) in config.producers.iter().zip(nominal).enumerate() {
        diag[i] = 2.0 * params.c2;
        linear[i] = params.marginal_cost(p);
        balance[i] = 1.0;
    }
    diag[spill] = DEFAULT_REGULARIZATION;
    diag[shed] = DEFAULT_REGULARIZATION;
    linear[spill] = config.spill_cost;
    linear[shed] = config.shed_cost;
    balance[spill] = -1.0;
    balance[shed] = 1.0;

    let mut b = QpProblem::builder(n)
        .hessian_diag(&diag[..n])
        .linear(&linear[..n])
        .eq(&balance[..n], -w_s)
        .ineq(&unit(spill, -1.0)[..n], 0.0)
        .ineq(&unit(shed, -1.0)[..n], 0.0);
    for (i, (params, &p)) in config.producers.iter().zip(nominal).enumerate() {
        b = b
            .ineq(&unit(i, 1.0)[..n], params.p_max - p)
            .ineq(&unit(i, -1.0)[..n], p - params.p_min)
            .ineq(&unit(i, 1.0)[..n], params.r_max)
            .ineq(&unit(i, -1.0)[..n], params.r_max);
    }
    b.ineq(&unit(spill, 1.0)[..n], config.wind_forecast + w_s)
        .ineq(&unit(shed, 1.0)[..n], config.load)
        .build()
        .map_err(EvaluationError::Qp)
}

/// `energy * p + reserve * alpha - c2 (p + r)^2 - c1 (p + r)`.
pub fn payoff_per_scenario(params: &ProducerParams, decision: &ProducerDecision, prices: &Prices, r_is: f64) -> f64 {
    prices.energy * decision.p + prices.reserve * decision.alpha - params.production_cost(decision.p + r_is)
}

/// Mean of the `ceil(tail * N)` largest costs.
pub fn cvar(costs: &[f64], tail: f64) -> Result<f64, EvaluationError> {
    if costs.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(EvaluationError::InvalidTail(tail));
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((tail * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

pub fn evaluate_out_of_sample(
    config: &MarketConfig,
    result: &EquilibriumResult,
    scenarios: &ForecastDataset,
) -> Result<RunStatistics, EvaluationError> {
    evaluate_out_of_sample_with(config, result, scenarios, EvaluationOptions::default())
}

/// Re-dispatches every scenario (in parallel) and aggregates reliability,
/// cost statistics and producer payoffs. Results do not depend on scheduling.
pub fn evaluate_out_of_sample_with(
    config: &MarketConfig,
    result: &EquilibriumResult,
    scenarios: &ForecastDataset,
    options: EvaluationOptions,
) -> Result<RunStatistics, EvaluationError> {
    if !result.converged {
        return Err(EvaluationError::NotConverged);
    }
    if scenarios.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    let nominal = result.nominal_dispatch();
    let per_scenario: Vec<(f64, bool, Vec<f64>)> = scenarios
        .samples
        .par_iter()
        .map(|&w_s| {
            let outcome = redispatch(config, &nominal, w_s)?;
            let payoffs = config
                .producers
                .iter()
                .zip(&result.decisions)
                .zip(&outcome.adjustments)
                .map(|((params, decision), &r)| payoff_per_scenario(params, decision, &result.prices, r))
                .collect();
            Ok((outcome.total_cost, outcome.violated, payoffs))
        })
        .collect::<Result<_, EvaluationError>>()?;

    let total = per_scenario.len();
    let violations = per_scenario.iter().filter(|s| s.1).count();
    let costs: Vec<f64> = per_scenario.iter().map(|s| s.0).collect();
    let mean_cost = costs.iter().sum::<f64>() / total as f64;
    let mut payoffs_mean = vec![0.0; config.producers.len()];
    for (_, _, payoffs) in &per_scenario {
        for (acc, v) in payoffs_mean.iter_mut().zip(payoffs) {
            *acc += v;
        }
    }
    payoffs_mean.iter_mut().for_each(|v| *v /= total as f64);

    Ok(RunStatistics {
        reliability: 1.0 - violations as f64 / total as f64,
        mean_cost,
        cvar5: cvar(&costs, CVAR_TAIL)?,
        payoffs_mean,
        violations,
        scenarios: total,
        payoffs: options
            .keep_scenario_payoffs
            .then(|| per_scenario.into_iter().map(|s| s.2).collect()),
    })
}

/// Writes one CSV line per scenario:
/// `scenario_index,w_s,r_1..r_n,w_spill,l_shed,cost,violated`.
pub fn write_scenario_dump<W: Write>(
    config: &MarketConfig,
    nominal: &[f64],
    scenarios: &ForecastDataset,
    mut out: W,
) -> io::Result<()> {
    let mut header = String::from("scenario_index,w_s");
    for i in 1..=config.producers.len() {
        header.push_str(&format!(",r_{i}"));
    }
    header.push_str(",w_spill,l_shed,cost,violated");
    writeln!(out, "{header}")?;
    for (index, &w_s) in scenarios.samples.iter().enumerate() {
        let o = redispatch(config, nominal, w_s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        write!(out, "{index},{w_s}")?;
        for r in &o.adjustments {
            write!(out, ",{r}")?;
        }
        writeln!(out, ",{},{},{},{}", o.spillage, o.shedding, o.total_cost, o.violated)?;
    }
    out.flush()
}
