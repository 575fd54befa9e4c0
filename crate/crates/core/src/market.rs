//! Market primitives and the producer's profit-maximization subproblem.
//!
//! A producer chooses a nominal dispatch `p` and a participation factor
//! `alpha` (the share of the forecast error it absorbs in real time). Given an
//! energy price and a reserve price it maximizes
//!
//! ```text
//!     energy * p - reserve * alpha - (c2 p^2 + c1 p + c2 (alpha sigma)^2)
//! ```
//!
//! subject to its limits enforced at the endpoints of its own sample support
//! `[w_lo, w_hi]`. The problem is solved as a minimization of negative profit;
//! this is the only place where objective signs are fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{solve_qp_warm, QpError, QpProblem, MAX_VARS};

/// Curvature added to the `alpha` term when the variance estimate is zero.
pub const DEFAULT_ALPHA_REGULARIZATION: f64 = 1e-9;

/// Scarcity price of reserve used by [`MarketConfig::two_producer_system`].
pub const DEFAULT_RESERVE_PRICE_CAP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid producer parameters: {0}")]
    InvalidProducer(String),
    #[error("invalid market configuration: {0}")]
    InvalidMarket(String),
    #[error("invalid forecast summary: {0}")]
    InvalidSummary(String),
    #[error("producer subproblem: {0}")]
    Qp(#[from] QpError),
}

/// Static techno-economic data of one conventional producer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProducerParams {
    /// Minimum output, MW.
    pub p_min: f64,
    /// Maximum output, MW.
    pub p_max: f64,
    /// Largest real-time adjustment in either direction, MW.
    pub r_max: f64,
    /// Linear cost coefficient, $/MWh.
    pub c1: f64,
    /// Quadratic cost coefficient, $/MW^2h.
    pub c2: f64,
}

impl ProducerParams {
    pub fn new(p_min: f64, p_max: f64, r_max: f64, c1: f64, c2: f64) -> Result<Self, MarketError> {
        let params = Self {
            p_min,
            p_max,
            r_max,
            c1,
            c2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let fields = [self.p_min, self.p_max, self.r_max, self.c1, self.c2];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(MarketError::InvalidProducer("non-finite field".into()));
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max) {
            return Err(MarketError::InvalidProducer(format!(
                "need 0 <= p_min <= p_max, got p_min={} p_max={}",
                self.p_min, self.p_max
            )));
        }
        if self.r_max < 0.0 {
            return Err(MarketError::InvalidProducer(format!("r_max={} < 0", self.r_max)));
        }
        if self.c2 <= 0.0 {
            return Err(MarketError::InvalidProducer(format!(
                "c2={} must be > 0 for a strictly convex cost",
                self.c2
            )));
        }
        if self.c1 < 0.0 {
            return Err(MarketError::InvalidProducer(format!("c1={} < 0", self.c1)));
        }
        Ok(())
    }

    /// Marginal cost `2 c2 p + c1` at output `p`.
    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.c2 * p + self.c1
    }

    /// Deterministic production cost `c2 p^2 + c1 p`.
    pub fn production_cost(&self, p: f64) -> f64 {
        self.c2 * p * p + self.c1 * p
    }
}

/// The market: producers, load, public wind forecast and emergency costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub producers: Vec<ProducerParams>,
    /// System load, MW.
    pub load: f64,
    /// Public point forecast of renewable output, MW.
    pub wind_forecast: f64,
    /// Renewable spillage cost, $/MWh.
    pub spill_cost: f64,
    /// Load shedding cost, $/MWh.
    pub shed_cost: f64,
    /// Scarcity price of reserve. When set, the reserve balance may fall short
    /// of one at this price instead of having no solution; `None` enforces the
    /// balance strictly.
    #[serde(default)]
    pub reserve_price_cap: Option<f64>,
}

impl MarketConfig {
    /// The stylized two-producer system used throughout the experiments.
    pub fn two_producer_system() -> Self {
        Self {
            producers: vec![
                ProducerParams {
                    p_min: 10.0,
                    p_max: 32.0,
                    r_max: 10.0,
                    c1: 10.0,
                    c2: 1.0,
                },
                ProducerParams {
                    p_min: 10.0,
                    p_max: 44.0,
                    r_max: 10.0,
                    c1: 3.0,
                    c2: 3.0,
                },
            ],
            load: 100.0,
            wind_forecast: 50.0,
            spill_cost: 100.0,
            shed_cost: 300.0,
            reserve_price_cap: Some(DEFAULT_RESERVE_PRICE_CAP),
        }
    }

    /// Net demand the conventional fleet must cover day-ahead.
    pub fn net_load(&self) -> f64 {
        self.load - self.wind_forecast
    }

    /// Checks invariants and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, MarketError> {
        if self.producers.is_empty() {
            return Err(MarketError::InvalidMarket("no producers".into()));
        }
        for (i, p) in self.producers.iter().enumerate() {
            p.validate()
                .map_err(|e| MarketError::InvalidMarket(format!("producer {}: {e}", i + 1)))?;
        }
        let scalars = [self.load, self.wind_forecast, self.spill_cost, self.shed_cost];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(MarketError::InvalidMarket("non-finite field".into()));
        }
        if self.load <= 0.0 {
            return Err(MarketError::InvalidMarket(format!("load={} must be > 0", self.load)));
        }
        if self.wind_forecast < 0.0 {
            return Err(MarketError::InvalidMarket(format!(
                "wind_forecast={} must be >= 0",
                self.wind_forecast
            )));
        }
        if self.spill_cost <= 0.0 || self.shed_cost <= 0.0 {
            return Err(MarketError::InvalidMarket("emergency costs must be > 0".into()));
        }
        if let Some(cap) = self.reserve_price_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(MarketError::InvalidMarket(format!(
                    "reserve_price_cap={cap} must be finite and > 0"
                )));
            }
        }
        let mut warnings = Vec::new();
        let max_mc = self
            .producers
            .iter()
            .map(|p| p.marginal_cost(p.p_max))
            .fold(f64::NEG_INFINITY, f64::max);
        if self.spill_cost <= max_mc {
            warnings.push(format!(
                "spill_cost {} does not exceed the largest marginal cost at capacity {max_mc}",
                self.spill_cost
            ));
        }
        if self.shed_cost <= max_mc {
            warnings.push(format!(
                "shed_cost {} does not exceed the largest marginal cost at capacity {max_mc}",
                self.shed_cost
            ));
        }
        Ok(warnings)
    }
}

/// A producer's private view of the forecast error: variance estimate and
/// support bounds. Construction clamps the bounds so that `w_lo <= 0 <= w_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub variance: f64,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl ForecastSummary {
    pub fn new(variance: f64, w_lo: f64, w_hi: f64) -> Result<Self, MarketError> {
        if !(variance.is_finite() && w_lo.is_finite() && w_hi.is_finite()) {
            return Err(MarketError::InvalidSummary("non-finite field".into()));
        }
        if variance < 0.0 {
            return Err(MarketError::InvalidSummary(format!("variance={variance} < 0")));
        }
        if w_lo > w_hi {
            return Err(MarketError::InvalidSummary(format!("w_lo={w_lo} > w_hi={w_hi}")));
        }
        Ok(Self {
            variance,
            w_lo: w_lo.min(0.0),
            w_hi: w_hi.max(0.0),
        })
    }

    /// No uncertainty at all.
    pub fn deterministic() -> Self {
        Self {
            variance: 0.0,
            w_lo: 0.0,
            w_hi: 0.0,
        }
    }

    pub fn support_width(&self) -> f64 {
        self.w_hi - self.w_lo
    }
}

/// Day-ahead decision of one producer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProducerDecision {
    /// Nominal dispatch, MW.
    pub p: f64,
    /// Participation factor, dimensionless, nonnegative.
    pub alpha: f64,
}

/// Energy price ($/MWh) and reserve price ($/MW). The reserve price is a
/// charge on `alpha` in the producer objective, so reserve scarcity shows up
/// as a negative value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prices {
    pub energy: f64,
    pub reserve: f64,
}

impl Prices {
    pub fn new(energy: f64, reserve: f64) -> Self {
        Self { energy, reserve }
    }
}

/// Expected production cost `c2 p^2 + c1 p + c2 alpha^2 variance` of the
/// affine policy `p - alpha w` under a zero-mean error.
pub fn expected_cost(params: &ProducerParams, decision: &ProducerDecision, summary: &ForecastSummary) -> f64 {
    let ProducerDecision { p, alpha } = *decision;
    params.c2 * p * p + params.c1 * p + params.c2 * alpha * alpha * summary.variance
}

/// Row count of the producer subproblem.
pub const BEST_RESPONSE_ROWS: usize = 5;

/// Fills the inequality rows of one producer over variables `(p, alpha)` at
/// columns `(pc, ac)` of a row of width `n`. Rows, in order:
///
/// ```text
///      p - alpha w_lo <= p_max
///     -p + alpha w_hi <= -p_min
///          alpha w_hi <= r_max
///         -alpha w_lo <= r_max
///              -alpha <= 0
/// ```
pub(crate) fn producer_rows(
    params: &ProducerParams,
    summary: &ForecastSummary,
    n: usize,
    pc: usize,
    ac: usize,
) -> [([f64; MAX_VARS], f64); BEST_RESPONSE_ROWS] {
    debug_assert!(n <= MAX_VARS);
    let row = |p: f64, a: f64| {
        let mut r = [0.0; MAX_VARS];
        r[pc] = p;
        r[ac] = a;
        r
    };
    [
        (row(1.0, -summary.w_lo), params.p_max),
        (row(-1.0, summary.w_hi), -params.p_min),
        (row(0.0, summary.w_hi), params.r_max),
        (row(0.0, -summary.w_lo), params.r_max),
        (row(0.0, -1.0), 0.0),
    ]
}

/// Curvature of the `alpha` term of the producer objective, including the
/// regularization applied when the variance estimate is zero.
pub fn reserve_curvature(params: &ProducerParams, summary: &ForecastSummary, alpha_regularization: f64) -> f64 {
    let base = 2.0 * params.c2 * summary.variance;
    if summary.variance == 0.0 {
        base + 2.0 * alpha_regularization
    } else {
        base
    }
}

/// The unregularized producer subproblem in variables `(p, alpha)`:
/// `Q = diag(2 c2, 2 c2 variance)`, `q = (c1 - energy, reserve)`.
pub fn build_best_response_qp(
    params: &ProducerParams,
    summary: &ForecastSummary,
    prices: &Prices,
) -> Result<QpProblem, MarketError> {
    build_producer_qp(params, summary, prices, 0.0)
}

fn build_producer_qp(
    params: &ProducerParams,
    summary: &ForecastSummary,
    prices: &Prices,
    alpha_regularization: f64,
) -> Result<QpProblem, MarketError> {
    let mut builder = QpProblem::builder(2)
        .hessian_diag(&[
            2.0 * params.c2,
            reserve_curvature(params, summary, alpha_regularization),
        ])
        .linear(&[params.c1 - prices.energy, prices.reserve]);
    for (row, rhs) in producer_rows(params, summary, 2, 0, 1) {
        builder = builder.ineq(&row[..2], rhs);
    }
    Ok(builder.build()?)
}

/// Profit-maximizing `(p, alpha)` at the given prices.
///
/// `alpha_regularization` is added (as `reg * alpha^2`) only when the variance
/// estimate is zero, so the response stays unique.
pub fn best_response(
    params: &ProducerParams,
    summary: &ForecastSummary,
    prices: &Prices,
    alpha_regularization: f64,
) -> Result<ProducerDecision, MarketError> {
    BestResponder::new(params, summary, alpha_regularization)?.respond(prices)
}

/// A producer's subproblem with its summary fixed; repeated responses only
/// swap the price-dependent linear term and start from the previous active
/// set. The subproblem is strictly convex, so this changes cost, not answers.
#[derive(Debug, Clone)]
pub struct BestResponder {
    qp: QpProblem,
    c1: f64,
    last_active: Option<u32>,
}

impl BestResponder {
    pub fn new(params: &ProducerParams, summary: &ForecastSummary, alpha_regularization: f64) -> Result<Self, MarketError> {
        Ok(Self {
            qp: build_producer_qp(params, summary, &Prices::default(), alpha_regularization)?,
            c1: params.c1,
            last_active: None,
        })
    }

    /// Same as [`best_response`] with this responder's data.
    pub fn respond(&mut self, prices: &Prices) -> Result<ProducerDecision, MarketError> {
        self.qp.set_linear(&[self.c1 - prices.energy, prices.reserve])?;
        let sol = solve_qp_warm(&self.qp, 0.0, self.last_active)?;
        self.last_active = Some(sol.active_mask());
        Ok(ProducerDecision {
            p: sol.x()[0],
            alpha: sol.x()[1],
        })
    }
}
