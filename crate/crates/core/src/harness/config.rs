//! Experiment configuration: TOML loading with defaults, validation, saving.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{ReserveStep, TatonnementSettings};
use crate::forecast::ErrorDistribution;
use crate::market::{MarketConfig, Prices, ProducerParams};

/// Sample sizes swept by default.
pub const DEFAULT_SAMPLE_SIZES: [usize; 9] = [10, 30, 50, 100, 300, 500, 1000, 1500, 10_000];
pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_OOS_COUNT: usize = 10_000;
pub const DEFAULT_BASE_SEED: u64 = 20_240_601;
/// Synthetic draws a learning producer adds to its dataset.
pub const DEFAULT_AUGMENT_COUNT: usize = 300_000;
pub const DEFAULT_NORMAL_VARIANCE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{}", parse_message(.line, .field, .message))]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Semantic(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn parse_message(line: &Option<usize>, field: &Option<String>, message: &str) -> String {
    let mut out = String::from("parse error");
    if let Some(l) = line {
        out.push_str(&format!(" at line {l}"));
    }
    if let Some(f) = field {
        out.push_str(&format!(" (field `{f}`)"));
    }
    out.push_str(": ");
    out.push_str(message);
    out
}

/// Which information each producer acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Each producer summarizes its own samples.
    #[default]
    Baseline,
    /// Each producer fits a beta model to its samples and augments them.
    Learning,
    /// All producers summarize the union of their samples.
    Sharing,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Learning => "learning",
            Self::Sharing => "sharing",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "learning" => Ok(Self::Learning),
            "sharing" => Ok(Self::Sharing),
            other => Err(format!("unknown mode {other:?} (baseline, learning, sharing)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub distribution: ErrorDistribution,
    /// Strictly increasing sample sizes to sweep.
    pub sample_sizes: Vec<usize>,
    /// Repetitions per sample size.
    pub runs: usize,
    /// Out-of-sample scenarios per run.
    pub oos_count: usize,
    pub base_seed: u64,
    pub mode: Mode,
    pub solver: TatonnementSettings,
    /// Where CSV output goes; nothing is written when `None`.
    pub output_dir: Option<PathBuf>,
    pub augment_count: usize,
    /// Write a price trace every this many iterations (needs `output_dir`).
    pub trace_every: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketConfig::two_producer_system(),
            distribution: ErrorDistribution::Normal {
                variance: DEFAULT_NORMAL_VARIANCE,
            },
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            runs: DEFAULT_RUNS,
            oos_count: DEFAULT_OOS_COUNT,
            base_seed: DEFAULT_BASE_SEED,
            mode: Mode::Baseline,
            solver: TatonnementSettings::default(),
            output_dir: None,
            augment_count: DEFAULT_AUGMENT_COUNT,
            trace_every: None,
        }
    }
}

// On-disk layout. Every field is optional; absent ones take the defaults
// above and are reported as warnings.

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    sample_sizes: Option<Vec<i64>>,
    runs: Option<i64>,
    oos_count: Option<i64>,
    base_seed: Option<u64>,
    augment_count: Option<i64>,
    output_dir: Option<PathBuf>,
    trace_every: Option<u64>,
    market: Option<RawMarket>,
    distribution: Option<ErrorDistribution>,
    solver: Option<RawSolver>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    load: Option<f64>,
    wind_forecast: Option<f64>,
    spill_cost: Option<f64>,
    shed_cost: Option<f64>,
    /// A number, or the string `"none"` for a strict reserve balance.
    reserve_price_cap: Option<RawCap>,
    producers: Option<Vec<ProducerParams>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawCap {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    rho: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<u64>,
    reserve_step: Option<ReserveStep>,
    alpha_regularization: Option<f64>,
    initial_energy_price: Option<f64>,
    initial_reserve_price: Option<f64>,
}

fn take<T>(value: Option<T>, default: T, name: &str, warnings: &mut Vec<String>) -> T {
    value.unwrap_or_else(|| {
        warnings.push(format!("`{name}` missing; using the default"));
        default
    })
}

fn count(value: i64, name: &str) -> Result<usize, ConfigError> {
    usize::try_from(value)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| ConfigError::Semantic(format!("`{name}` must be a positive integer, got {value}")))
}

fn from_raw(raw: RawConfig) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let d = ExperimentConfig::default();
    let dm = &d.market;
    let ds = &d.solver;
    let mut w = Vec::new();

    let rm = raw.market.unwrap_or_else(|| {
        w.push("`market` missing; using the default two-producer system".into());
        RawMarket {
            load: Some(dm.load),
            wind_forecast: Some(dm.wind_forecast),
            spill_cost: Some(dm.spill_cost),
            shed_cost: Some(dm.shed_cost),
            reserve_price_cap: Some(cap_to_raw(dm.reserve_price_cap)),
            producers: Some(dm.producers.clone()),
        }
    });
    let reserve_price_cap = match take(
        rm.reserve_price_cap,
        cap_to_raw(dm.reserve_price_cap),
        "market.reserve_price_cap",
        &mut w,
    ) {
        RawCap::Value(v) => Some(v),
        RawCap::Keyword(k) if k == "none" => None,
        RawCap::Keyword(k) => {
            return Err(ConfigError::Parse {
                line: None,
                field: Some("market.reserve_price_cap".into()),
                message: format!("expected a number or \"none\", got {k:?}"),
            })
        }
    };
    let market = MarketConfig {
        producers: take(rm.producers, dm.producers.clone(), "market.producers", &mut w),
        load: take(rm.load, dm.load, "market.load", &mut w),
        wind_forecast: take(rm.wind_forecast, dm.wind_forecast, "market.wind_forecast", &mut w),
        spill_cost: take(rm.spill_cost, dm.spill_cost, "market.spill_cost", &mut w),
        shed_cost: take(rm.shed_cost, dm.shed_cost, "market.shed_cost", &mut w),
        reserve_price_cap,
    };

    let rs = raw.solver.unwrap_or_else(|| {
        w.push("`solver` missing; using default price-iteration settings".into());
        RawSolver {
            rho: Some(ds.rho),
            tol: Some(ds.tol),
            max_iter: Some(ds.max_iter),
            reserve_step: Some(ds.reserve_step),
            alpha_regularization: Some(ds.alpha_regularization),
            initial_energy_price: Some(ds.initial_prices.energy),
            initial_reserve_price: Some(ds.initial_prices.reserve),
        }
    });
    let solver = TatonnementSettings {
        rho: take(rs.rho, ds.rho, "solver.rho", &mut w),
        tol: take(rs.tol, ds.tol, "solver.tol", &mut w),
        max_iter: take(rs.max_iter, ds.max_iter, "solver.max_iter", &mut w),
        initial_prices: Prices::new(
            take(
                rs.initial_energy_price,
                ds.initial_prices.energy,
                "solver.initial_energy_price",
                &mut w,
            ),
            take(
                rs.initial_reserve_price,
                ds.initial_prices.reserve,
                "solver.initial_reserve_price",
                &mut w,
            ),
        ),
        reserve_step: take(rs.reserve_step, ds.reserve_step, "solver.reserve_step", &mut w),
        alpha_regularization: take(
            rs.alpha_regularization,
            ds.alpha_regularization,
            "solver.alpha_regularization",
            &mut w,
        ),
    };

    let sample_sizes = match raw.sample_sizes {
        Some(v) => v
            .into_iter()
            .map(|s| count(s, "sample_sizes"))
            .collect::<Result<Vec<_>, _>>()?,
        None => take(None, d.sample_sizes.clone(), "sample_sizes", &mut w),
    };
    let runs = match raw.runs {
        Some(v) => count(v, "runs")?,
        None => take(None, d.runs, "runs", &mut w),
    };
    let oos_count = match raw.oos_count {
        Some(v) => count(v, "oos_count")?,
        None => take(None, d.oos_count, "oos_count", &mut w),
    };
    let augment_count = match raw.augment_count {
        Some(v) => usize::try_from(v)
            .map_err(|_| ConfigError::Semantic(format!("`augment_count` must be >= 0, got {v}")))?,
        None => take(None, d.augment_count, "augment_count", &mut w),
    };

    let config = ExperimentConfig {
        market,
        distribution: take(raw.distribution, d.distribution, "distribution", &mut w),
        sample_sizes,
        runs,
        oos_count,
        base_seed: take(raw.base_seed, d.base_seed, "base_seed", &mut w),
        mode: take(raw.mode, d.mode, "mode", &mut w),
        solver,
        output_dir: raw.output_dir,
        augment_count,
        trace_every: raw.trace_every,
    };
    Ok((config, w))
}

fn cap_to_raw(cap: Option<f64>) -> RawCap {
    cap.map_or_else(|| RawCap::Keyword("none".into()), RawCap::Value)
}

fn to_raw(config: &ExperimentConfig) -> RawConfig {
    let m = &config.market;
    let s = &config.solver;
    RawConfig {
        mode: Some(config.mode),
        sample_sizes: Some(config.sample_sizes.iter().map(|&v| v as i64).collect()),
        runs: Some(config.runs as i64),
        oos_count: Some(config.oos_count as i64),
        base_seed: Some(config.base_seed),
        augment_count: Some(config.augment_count as i64),
        output_dir: config.output_dir.clone(),
        trace_every: config.trace_every,
        market: Some(RawMarket {
            load: Some(m.load),
            wind_forecast: Some(m.wind_forecast),
            spill_cost: Some(m.spill_cost),
            shed_cost: Some(m.shed_cost),
            reserve_price_cap: Some(cap_to_raw(m.reserve_price_cap)),
            producers: Some(m.producers.clone()),
        }),
        distribution: Some(config.distribution),
        solver: Some(RawSolver {
            rho: Some(s.rho),
            tol: Some(s.tol),
            max_iter: Some(s.max_iter),
            reserve_step: Some(s.reserve_step),
            alpha_regularization: Some(s.alpha_regularization),
            initial_energy_price: Some(s.initial_prices.energy),
            initial_reserve_price: Some(s.initial_prices.reserve),
        }),
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    let message = e.message().to_string();
    // serde names the offending key in backticks
    let field = message.split('`').nth(1).map(str::to_string);
    ConfigError::Parse { line, field, message }
}

/// Parses configuration text. Missing fields take their defaults and are
/// listed in the returned warnings together with any validation warnings.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let (config, mut warnings) = from_raw(raw)?;
    warnings.extend(validate_config(&config)?);
    Ok((config, warnings))
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

/// Serializes every field, so loading the text back reports no warnings
/// about missing fields.
pub fn config_to_toml(config: &ExperimentConfig) -> String {
    toml::to_string(&to_raw(config)).expect("configuration always serializes")
}

pub fn save_config(config: &ExperimentConfig, path: &Path) -> Result<(), ConfigError> {
    std::fs::write(path, config_to_toml(config)).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Rejects invariant violations; returns warnings for legal but suspicious
/// settings.
pub fn validate_config(config: &ExperimentConfig) -> Result<Vec<String>, ConfigError> {
    let semantic = |m: String| ConfigError::Semantic(m);
    let mut warnings = config.market.validate().map_err(|e| semantic(e.to_string()))?;
    config.distribution.validate().map_err(|e| semantic(e.to_string()))?;
    config.solver.validate().map_err(|e| semantic(e.to_string()))?;

    if config.sample_sizes.is_empty() {
        return Err(semantic("`sample_sizes` is empty".into()));
    }
    if config.sample_sizes.contains(&0) {
        return Err(semantic("`sample_sizes` must be positive".into()));
    }
    if config.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(semantic("`sample_sizes` must be strictly increasing".into()));
    }
    if config.runs == 0 {
        return Err(semantic("`runs` must be >= 1".into()));
    }
    if config.oos_count == 0 {
        return Err(semantic("`oos_count` must be >= 1".into()));
    }
    if config.mode == Mode::Learning && !matches!(config.distribution, ErrorDistribution::ScaledBeta { .. }) {
        return Err(semantic(
            "learning mode fits a beta model and needs a scaled_beta distribution".into(),
        ));
    }
    if config.trace_every == Some(0) {
        return Err(semantic("`trace_every` must be >= 1".into()));
    }
    if config.trace_every.is_some() && config.output_dir.is_none() {
        warnings.push("`trace_every` is set but there is no `output_dir`; no traces are written".into());
    }
    if config.mode == Mode::Sharing && config.market.producers.len() < 2 {
        warnings.push("sharing with a single producer is the same as baseline".into());
    }
    if config.mode == Mode::Learning && config.augment_count == 0 {
        warnings.push("learning with `augment_count = 0` only refits the data at hand".into());
    }
    Ok(warnings)
}
