//! Maximum-likelihood beta fit with a known scale, and dataset augmentation
//! from the fitted distribution.

use super::rng::SplitMix64;
use super::special::{digamma, trigamma};
use super::{ForecastDataset, ForecastError};

/// Samples rescaled exactly onto 0 or 1 are moved inward by this much.
pub const BOUNDARY_NUDGE: f64 = 1e-9;
/// Newton stops once both likelihood equations hold to this tolerance.
pub const MLE_GRADIENT_TOL: f64 = 1e-10;
pub const MLE_MAX_ITER: usize = 200;

const SUPPORT_SLACK: f64 = 1e-12;
const SHAPE_CEILING: f64 = 1e10;

/// Fitted shapes together with the known affine map `w = scale * B - offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub scale: f64,
    pub offset: f64,
}

/// Method-of-moments shapes for a beta variable with the given mean and
/// variance, or `None` when the moments admit no beta distribution.
pub fn beta_moments_init(mean: f64, variance: f64) -> Option<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0 && variance > 0.0) {
        return None;
    }
    let common = (mean - mean * mean) / variance - 1.0;
    if common <= 0.0 {
        return None;
    }
    let a = mean * common;
    Some((a, common - a))
}

/// Fits `(alpha, beta)` to `(w + offset) / scale` by Newton iterations on the
/// two digamma stationarity conditions, starting from the moment estimate.
pub fn fit_beta_mle(dataset: &ForecastDataset, scale: f64, offset: f64) -> Result<BetaFit, ForecastError> {
    if dataset.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }
    if !(scale.is_finite() && scale > 0.0 && offset.is_finite()) {
        return Err(ForecastError::InvalidDistribution(format!(
            "scale={scale}, offset={offset}"
        )));
    }

    let mut unit = Vec::with_capacity(dataset.len());
    for (index, w) in dataset.samples.iter().enumerate() {
        let x = (w + offset) / scale;
        if !(-SUPPORT_SLACK..=1.0 + SUPPORT_SLACK).contains(&x) {
            return Err(ForecastError::OutOfSupport { index, value: x });
        }
        unit.push(x.clamp(BOUNDARY_NUDGE, 1.0 - BOUNDARY_NUDGE));
    }

    let n = unit.len() as f64;
    let mean = unit.iter().sum::<f64>() / n;
    let variance = unit.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mean_ln = unit.iter().map(|x| x.ln()).sum::<f64>() / n;
    let mean_ln1m = unit.iter().map(|x| (1.0 - x).ln()).sum::<f64>() / n;

    let (mut a, mut b) = beta_moments_init(mean, variance).ok_or_else(|| {
        ForecastError::NoConvergence(format!(
            "no moment estimate for mean {mean} and variance {variance}"
        ))
    })?;

    let residual = |a: f64, b: f64| {
        let ab = digamma(a + b);
        (digamma(a) - ab - mean_ln, digamma(b) - ab - mean_ln1m)
    };
    let norm = |r: (f64, f64)| r.0.abs().max(r.1.abs());

    let mut r = residual(a, b);
    for _ in 0..MLE_MAX_ITER {
        if norm(r) < MLE_GRADIENT_TOL {
            return Ok(BetaFit {
                alpha_hat: a,
                beta_hat: b,
                scale,
                offset,
            });
        }
        let tab = trigamma(a + b);
        let (j11, j12, j22) = (trigamma(a) - tab, -tab, trigamma(b) - tab);
        let det = j11 * j22 - j12 * j12;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        let da = -(j22 * r.0 - j12 * r.1) / det;
        let db = -(j11 * r.1 - j12 * r.0) / det;

        // Backtrack to stay positive and reduce the residual.
        let mut t = 1.0;
        let current = norm(r);
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a + t * da, b + t * db);
            if na > 0.0 && nb > 0.0 {
                let nr = residual(na, nb);
                if norm(nr) < current {
                    a = na;
                    b = nb;
                    r = nr;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if !(a < SHAPE_CEILING && b < SHAPE_CEILING) {
            return Err(ForecastError::NoConvergence(format!(
                "shape estimates diverged (alpha={a}, beta={b})"
            )));
        }
    }
    if norm(r) < MLE_GRADIENT_TOL {
        return Ok(BetaFit {
            alpha_hat: a,
            beta_hat: b,
            scale,
            offset,
        });
    }
    Err(ForecastError::NoConvergence(format!(
        "residual {} after Newton iterations (alpha={a}, beta={b})",
        norm(r)
    )))
}

/// Appends `generated_count` draws of `scale * Beta(alpha_hat, beta_hat) -
/// offset` to the dataset.
pub fn learn_and_augment(
    dataset: &ForecastDataset,
    fit: &BetaFit,
    generated_count: usize,
    seed: u64,
) -> ForecastDataset {
    let mut samples = Vec::with_capacity(dataset.len() + generated_count);
    samples.extend_from_slice(&dataset.samples);
    samples.extend((0..generated_count as u64).map(|j| {
        let b = SplitMix64::for_sample(seed, j).next_beta(fit.alpha_hat, fit.beta_hat);
        fit.scale * b - fit.offset
    }));
    ForecastDataset::new(samples, dataset.seed_label)
}
