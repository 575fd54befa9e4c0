//! Forecast-error data: sampling from the true distribution, the private
//! datasets producers hold, and what they estimate from them.

mod beta;
pub mod rng;
pub mod special;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::ForecastSummary;
use rng::SplitMix64;

pub use beta::{beta_moments_init, fit_beta_mle, learn_and_augment, BetaFit, BOUNDARY_NUDGE, MLE_GRADIENT_TOL, MLE_MAX_ITER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index} rescales to {value}, outside [0, 1]; wrong scale or offset?")]
    OutOfSupport { index: usize, value: f64 },
    #[error("maximum likelihood iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("line {line}: cannot parse {text:?} as a sample")]
    Parse { line: usize, text: String },
    #[error("i/o: {0}")]
    Io(String),
}

/// True distribution of the forecast error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDistribution {
    /// Zero-mean normal with the given variance, MW^2.
    Normal { variance: f64 },
    /// `scale * B` with `B ~ Beta(alpha_shape, beta_shape)`, shifted by the
    /// population mean when `centered`.
    ScaledBeta {
        alpha_shape: f64,
        beta_shape: f64,
        scale: f64,
        centered: bool,
    },
}

impl ErrorDistribution {
    pub fn normal(variance: f64) -> Result<Self, ForecastError> {
        let d = Self::Normal { variance };
        d.validate()?;
        Ok(d)
    }

    pub fn scaled_beta(alpha_shape: f64, beta_shape: f64, scale: f64, centered: bool) -> Result<Self, ForecastError> {
        let d = Self::ScaledBeta {
            alpha_shape,
            beta_shape,
            scale,
            centered,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ForecastError::InvalidDistribution(format!("{name}={v} must be > 0")))
            }
        };
        match *self {
            Self::Normal { variance } => positive("variance", variance),
            Self::ScaledBeta {
                alpha_shape,
                beta_shape,
                scale,
                ..
            } => {
                positive("alpha_shape", alpha_shape)?;
                positive("beta_shape", beta_shape)?;
                positive("scale", scale)
            }
        }
    }

    /// Shift subtracted from `scale * B`; zero unless a centered beta.
    pub fn offset(&self) -> f64 {
        match *self {
            Self::Normal { .. } => 0.0,
            Self::ScaledBeta {
                alpha_shape,
                beta_shape,
                scale,
                centered,
            } => {
                if centered {
                    scale * alpha_shape / (alpha_shape + beta_shape)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Normal { .. } => 0.0,
            Self::ScaledBeta {
                alpha_shape,
                beta_shape,
                scale,
                ..
            } => scale * alpha_shape / (alpha_shape + beta_shape) - self.offset(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Normal { variance } => variance,
            Self::ScaledBeta {
                alpha_shape: a,
                beta_shape: b,
                scale,
                ..
            } => scale * scale * a * b / ((a + b) * (a + b) * (a + b + 1.0)),
        }
    }

    fn sample(&self, rng: &mut SplitMix64) -> f64 {
        match *self {
            Self::Normal { variance } => variance.sqrt() * rng.next_standard_normal(),
            Self::ScaledBeta {
                alpha_shape,
                beta_shape,
                scale,
                ..
            } => scale * rng.next_beta(alpha_shape, beta_shape) - self.offset(),
        }
    }
}

/// A producer's private sample set of forecast errors, MW.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub samples: Vec<f64>,
    /// Seed the samples were drawn with, kept for provenance.
    pub seed_label: u64,
}

impl ForecastDataset {
    pub fn new(samples: Vec<f64>, seed_label: u64) -> Self {
        Self { samples, seed_label }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One sample per line, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.samples {
            writeln!(out, "{s:.16e}")?;
        }
        out.flush()
    }

    /// Reads the format of [`write_text`](Self::write_text); blank lines are skipped.
    pub fn read_text<R: BufRead>(input: R, seed_label: u64) -> Result<Self, ForecastError> {
        let mut samples = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ForecastError::Io(e.to_string()))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let value: f64 = text.parse().map_err(|_| ForecastError::Parse {
                line: i + 1,
                text: text.to_string(),
            })?;
            samples.push(value);
        }
        Ok(Self::new(samples, seed_label))
    }
}

/// Draws `count` i.i.d. samples. Sample `j` depends only on `(dist, seed, j)`,
/// so a longer draw extends a shorter one with the same seed.
pub fn draw_samples(dist: &ErrorDistribution, count: usize, seed: u64) -> ForecastDataset {
    let samples = (0..count as u64)
        .map(|j| dist.sample(&mut SplitMix64::for_sample(seed, j)))
        .collect();
    ForecastDataset::new(samples, seed)
}

/// Variance (1/s divisor) and support of the samples, with the support
/// widened to contain zero.
pub fn summarize(dataset: &ForecastDataset) -> Result<ForecastSummary, ForecastError> {
    let s = &dataset.samples;
    if s.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let variance = s.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ForecastSummary::new(variance, lo, hi)
        .map_err(|e| ForecastError::InvalidDistribution(e.to_string()))
}

/// Concatenates datasets in the given order.
pub fn pool_datasets(datasets: &[ForecastDataset]) -> Result<ForecastDataset, ForecastError> {
    let first = datasets.first().ok_or(ForecastError::EmptyDataset)?;
    let samples = datasets.iter().flat_map(|d| d.samples.iter().copied()).collect();
    Ok(ForecastDataset::new(samples, first.seed_label))
}

/// Euclidean norm of `a - b`.
pub fn dissimilarity_l2(a: &[f64], b: &[f64]) -> Result<f64, ForecastError> {
    if a.len() != b.len() {
        return Err(ForecastError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}
