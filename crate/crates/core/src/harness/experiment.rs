//! Experiment loops: one grid cell at a time, then the whole sweep with CSV
//! output and per-size aggregates.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::{validate_config, ExperimentConfig, Mode};
use super::seeds::{augmentation_seed, out_of_sample_seed, private_data_seed};
use super::HarnessError;
use crate::equilibrium::{tatonnement_traced, EquilibriumError, IterationTrace};
use crate::evaluation::{evaluate_out_of_sample, RunStatistics};
use crate::forecast::{
    dissimilarity_l2, draw_samples, fit_beta_mle, learn_and_augment, pool_datasets, summarize, BetaFit,
    ErrorDistribution, ForecastDataset,
};
use crate::market::{ForecastSummary, Prices, ProducerDecision};

/// What one producer knew and did in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProducerOutcome {
    /// Summary the producer acted on; `None` if it could not be formed.
    pub summary: Option<ForecastSummary>,
    /// Beta fit, in learning mode.
    pub fit: Option<BetaFit>,
    /// Final day-ahead decision, also for a non-converged iteration.
    pub decision: Option<ProducerDecision>,
    /// Mean out-of-sample payoff, when evaluated.
    pub payoff: Option<f64>,
}

/// Result of one `(sample_size, run)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub mode: Mode,
    pub sample_size: usize,
    pub run: usize,
    pub converged: bool,
    pub iterations: u64,
    pub prices: Option<Prices>,
    pub producers: Vec<ProducerOutcome>,
    /// Out-of-sample indicators; only for converged cells.
    pub statistics: Option<RunStatistics>,
    /// Why the cell has no statistics, if it failed along the way.
    pub failure: Option<String>,
}

/// Private datasets of all producers for one cell.
pub fn producer_datasets(config: &ExperimentConfig, sample_size: usize, run: usize) -> Vec<ForecastDataset> {
    (0..config.market.producers.len())
        .map(|i| {
            draw_samples(
                &config.distribution,
                sample_size,
                private_data_seed(config.base_seed, sample_size, run, i),
            )
        })
        .collect()
}

/// Scenarios every mode and sample size of `run` is evaluated on.
pub fn out_of_sample_scenarios(config: &ExperimentConfig, run: usize) -> ForecastDataset {
    draw_samples(
        &config.distribution,
        config.oos_count,
        out_of_sample_seed(config.base_seed, run),
    )
}

/// The summaries the producers act on in one cell, after the configured
/// mode has been applied to their private data.
pub fn cell_summaries(
    config: &ExperimentConfig,
    sample_size: usize,
    run: usize,
) -> Result<Vec<ForecastSummary>, HarnessError> {
    validate_config(config)?;
    let datasets = producer_datasets(config, sample_size, run);
    let mut outcomes = vec![
        ProducerOutcome {
            summary: None,
            fit: None,
            decision: None,
            payoff: None,
        };
        datasets.len()
    ];
    form_summaries(config, sample_size, run, &datasets, &mut outcomes).map_err(HarnessError::Input)
}

/// Draws the cell's data and evaluates it.
pub fn run_single(config: &ExperimentConfig, sample_size: usize, run: usize) -> Result<ExperimentRow, HarnessError> {
    validate_config(config)?;
    let datasets = producer_datasets(config, sample_size, run);
    let scenarios = out_of_sample_scenarios(config, run);
    let trace_path = match (config.trace_every, &config.output_dir) {
        (Some(_), Some(dir)) => Some(dir.join(format!("trace_{}_n{sample_size}_r{run}.csv", config.mode))),
        _ => None,
    };
    match trace_path {
        Some(path) => {
            let mut out = BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(&path, e))?);
            let trace = IterationTrace {
                every: config.trace_every.unwrap_or(1),
                out: &mut out,
            };
            let row = evaluate_cell(config, sample_size, run, &datasets, &scenarios, Some(trace))?;
            out.flush().map_err(|e| HarnessError::io(&path, e))?;
            Ok(row)
        }
        None => evaluate_cell(config, sample_size, run, &datasets, &scenarios, None),
    }
}

/// Applies the configured mode to the given private datasets, finds the
/// equilibrium and evaluates it on `scenarios`. Solver failures are recorded
/// in the row; only invalid input and trace I/O errors are returned.
pub fn evaluate_cell(
    config: &ExperimentConfig,
    sample_size: usize,
    run: usize,
    datasets: &[ForecastDataset],
    scenarios: &ForecastDataset,
    trace: Option<IterationTrace<'_>>,
) -> Result<ExperimentRow, HarnessError> {
    let count = config.market.producers.len();
    if datasets.len() != count {
        return Err(HarnessError::Input(format!(
            "{} datasets for {count} producers",
            datasets.len()
        )));
    }
    let mut row = ExperimentRow {
        mode: config.mode,
        sample_size,
        run,
        converged: false,
        iterations: 0,
        prices: None,
        producers: vec![
            ProducerOutcome {
                summary: None,
                fit: None,
                decision: None,
                payoff: None,
            };
            count
        ],
        statistics: None,
        failure: None,
    };

    let summaries = match form_summaries(config, sample_size, run, datasets, &mut row.producers) {
        Ok(s) => s,
        Err(reason) => {
            row.failure = Some(reason);
            return Ok(row);
        }
    };
    for (outcome, summary) in row.producers.iter_mut().zip(&summaries) {
        outcome.summary = Some(*summary);
    }

    let result = match tatonnement_traced(&config.market, &summaries, &config.solver, trace) {
        Ok(r) => r,
        Err(e @ EquilibriumError::ProducerInfeasible { .. }) => {
            row.failure = Some(e.to_string());
            return Ok(row);
        }
        Err(e) => return Err(e.into()),
    };
    row.converged = result.converged;
    row.iterations = result.iterations;
    row.prices = Some(result.prices);
    for (outcome, decision) in row.producers.iter_mut().zip(&result.decisions) {
        outcome.decision = Some(*decision);
    }
    if !result.converged {
        row.failure = Some(format!(
            "price iteration stopped after {} iterations (energy residual {:.3e}, reserve residual {:.3e})",
            result.iterations, result.energy_residual, result.reserve_residual
        ));
        return Ok(row);
    }
    let stats = evaluate_out_of_sample(&config.market, &result, scenarios)?;
    for (outcome, payoff) in row.producers.iter_mut().zip(&stats.payoffs_mean) {
        outcome.payoff = Some(*payoff);
    }
    row.statistics = Some(stats);
    Ok(row)
}

fn form_summaries(
    config: &ExperimentConfig,
    sample_size: usize,
    run: usize,
    datasets: &[ForecastDataset],
    outcomes: &mut [ProducerOutcome],
) -> Result<Vec<ForecastSummary>, String> {
    let describe = |i: usize, e: &dyn std::fmt::Display| format!("producer {}: {e}", i + 1);
    match config.mode {
        Mode::Baseline => datasets
            .iter()
            .enumerate()
            .map(|(i, d)| summarize(d).map_err(|e| describe(i, &e)))
            .collect(),
        Mode::Sharing => {
            let pooled = pool_datasets(datasets).map_err(|e| e.to_string())?;
            let summary = summarize(&pooled).map_err(|e| e.to_string())?;
            Ok(vec![summary; datasets.len()])
        }
        Mode::Learning => {
            let ErrorDistribution::ScaledBeta { scale, .. } = config.distribution else {
                return Err("learning mode needs a scaled_beta distribution".into());
            };
            let offset = config.distribution.offset();
            let mut summaries = Vec::with_capacity(datasets.len());
            for (i, (d, outcome)) in datasets.iter().zip(outcomes.iter_mut()).enumerate() {
                let fit = fit_beta_mle(d, scale, offset).map_err(|e| describe(i, &e))?;
                outcome.fit = Some(fit);
                let seed = augmentation_seed(config.base_seed, sample_size, run, i);
                let augmented = learn_and_augment(d, &fit, config.augment_count, seed);
                summaries.push(summarize(&augmented).map_err(|e| describe(i, &e))?);
            }
            Ok(summaries)
        }
    }
}

/// Mean, minimum and maximum of an indicator over the converged runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    /// All NaN for an empty input.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// l2 distance between two producers' per-run estimate vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissimilarity {
    pub first: usize,
    pub second: usize,
    pub variance: f64,
    /// Of the support widths `w_hi - w_lo`.
    pub width: f64,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeAggregate {
    pub mode: Mode,
    pub sample_size: usize,
    pub runs: usize,
    pub converged: usize,
    pub reliability: Spread,
    pub mean_cost: Spread,
    pub cvar5: Spread,
    pub payoffs: Vec<Spread>,
    pub dissimilarities: Vec<Dissimilarity>,
}

/// Aggregates rows by sample size, in order of first appearance. Statistics
/// use converged rows only; dissimilarities use every row whose estimates
/// could be formed, since estimates do not depend on the price iteration.
pub fn aggregate(rows: &[ExperimentRow]) -> Vec<SizeAggregate> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in rows {
        if !sizes.contains(&r.sample_size) {
            sizes.push(r.sample_size);
        }
    }
    sizes
        .into_iter()
        .map(|size| {
            let cell: Vec<&ExperimentRow> = rows.iter().filter(|r| r.sample_size == size).collect();
            let stats: Vec<&RunStatistics> = cell.iter().filter_map(|r| r.statistics.as_ref()).collect();
            let count = cell.first().map_or(0, |r| r.producers.len());
            let spread = |f: &dyn Fn(&RunStatistics) -> f64| Spread::of(&stats.iter().map(|s| f(s)).collect::<Vec<_>>());
            SizeAggregate {
                mode: cell[0].mode,
                sample_size: size,
                runs: cell.len(),
                converged: stats.len(),
                reliability: spread(&|s| s.reliability),
                mean_cost: spread(&|s| s.mean_cost),
                cvar5: spread(&|s| s.cvar5),
                payoffs: (0..count).map(|i| spread(&|s| s.payoffs_mean[i])).collect(),
                dissimilarities: dissimilarities(&cell, count),
            }
        })
        .collect()
}

fn dissimilarities(cell: &[&ExperimentRow], count: usize) -> Vec<Dissimilarity> {
    let with_summaries: Vec<&&ExperimentRow> = cell
        .iter()
        .filter(|r| r.producers.iter().all(|p| p.summary.is_some()))
        .collect();
    let with_fits: Vec<&&ExperimentRow> = cell
        .iter()
        .filter(|r| r.producers.iter().all(|p| p.fit.is_some()))
        .collect();
    let column = |rows: &[&&ExperimentRow], i: usize, f: &dyn Fn(&ProducerOutcome) -> f64| -> Vec<f64> {
        rows.iter().map(|r| f(&r.producers[i])).collect()
    };
    let distance = |rows: &[&&ExperimentRow], i: usize, j: usize, f: &dyn Fn(&ProducerOutcome) -> f64| {
        dissimilarity_l2(&column(rows, i, f), &column(rows, j, f)).expect("equal run counts")
    };
    let variance = |p: &ProducerOutcome| p.summary.map_or(f64::NAN, |s| s.variance);
    let width = |p: &ProducerOutcome| p.summary.map_or(f64::NAN, |s| s.support_width());
    let alpha = |p: &ProducerOutcome| p.fit.map_or(f64::NAN, |f| f.alpha_hat);
    let beta = |p: &ProducerOutcome| p.fit.map_or(f64::NAN, |f| f.beta_hat);
    let fitted = !with_fits.is_empty();

    let mut out = Vec::new();
    for i in 0..count {
        for j in i + 1..count {
            out.push(Dissimilarity {
                first: i,
                second: j,
                variance: distance(&with_summaries, i, j, &variance),
                width: distance(&with_summaries, i, j, &width),
                alpha_hat: fitted.then(|| distance(&with_fits, i, j, &alpha)),
                beta_hat: fitted.then(|| distance(&with_fits, i, j, &beta)),
            });
        }
    }
    out
}

/// Column names of the row CSV.
pub fn row_csv_header(producer_count: usize, with_fit: bool) -> String {
    let mut h = String::from("mode,sample_size,run,producer_count,converged,iterations,lambda_e,lambda_r,");
    for i in 1..=producer_count {
        h.push_str(&format!("p_{i},alpha_{i},var_{i},wlo_{i},whi_{i},"));
        if with_fit {
            h.push_str(&format!("ahat_{i},bhat_{i},"));
        }
        h.push_str(&format!("payoff_{i},"));
    }
    h.push_str("reliability,mean_cost,cvar5");
    h
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

pub fn row_csv_line(row: &ExperimentRow, with_fit: bool) -> String {
    let mut f: Vec<String> = vec![
        row.mode.to_string(),
        row.sample_size.to_string(),
        row.run.to_string(),
        row.producers.len().to_string(),
        row.converged.to_string(),
        row.iterations.to_string(),
        num(row.prices.map(|p| p.energy)),
        num(row.prices.map(|p| p.reserve)),
    ];
    for p in &row.producers {
        f.push(num(p.decision.map(|d| d.p)));
        f.push(num(p.decision.map(|d| d.alpha)));
        f.push(num(p.summary.map(|s| s.variance)));
        f.push(num(p.summary.map(|s| s.w_lo)));
        f.push(num(p.summary.map(|s| s.w_hi)));
        if with_fit {
            f.push(num(p.fit.map(|b| b.alpha_hat)));
            f.push(num(p.fit.map(|b| b.beta_hat)));
        }
        f.push(num(p.payoff));
    }
    let s = row.statistics.as_ref();
    f.push(num(s.map(|s| s.reliability)));
    f.push(num(s.map(|s| s.mean_cost)));
    f.push(num(s.map(|s| s.cvar5)));
    f.join(",")
}

pub fn aggregate_csv_header(producer_count: usize, with_fit: bool) -> String {
    let mut h = String::from("mode,sample_size,runs,converged");
    for name in ["reliability", "mean_cost", "cvar5"] {
        h.push_str(&format!(",{name}_mean,{name}_min,{name}_max"));
    }
    for i in 1..=producer_count {
        h.push_str(&format!(",payoff_{i}_mean,payoff_{i}_min,payoff_{i}_max"));
    }
    for i in 1..=producer_count {
        for j in i + 1..=producer_count {
            h.push_str(&format!(",dvar_{i}_{j},dwidth_{i}_{j}"));
            if with_fit {
                h.push_str(&format!(",dahat_{i}_{j},dbhat_{i}_{j}"));
            }
        }
    }
    h
}

pub fn aggregate_csv_line(agg: &SizeAggregate, with_fit: bool) -> String {
    let mut f = vec![
        agg.mode.to_string(),
        agg.sample_size.to_string(),
        agg.runs.to_string(),
        agg.converged.to_string(),
    ];
    let mut spread = |s: &Spread| f.extend([s.mean, s.min, s.max].map(|v| v.to_string()));
    spread(&agg.reliability);
    spread(&agg.mean_cost);
    spread(&agg.cvar5);
    agg.payoffs.iter().for_each(&mut spread);
    for d in &agg.dissimilarities {
        f.push(d.variance.to_string());
        f.push(d.width.to_string());
        if with_fit {
            f.push(num(d.alpha_hat));
            f.push(num(d.beta_hat));
        }
    }
    f.join(",")
}

/// Everything one sweep produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub aggregates: Vec<SizeAggregate>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(config, |_| {})
}

/// Sweeps `sample_sizes x runs`. Runs of one size execute in parallel; rows
/// are reported to `on_row` and appended to `rows_<mode>.csv` in grid order
/// as each size completes, so an interrupted sweep keeps finished sizes.
/// `aggregate_<mode>.csv` is written at the end.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut on_row: impl FnMut(&ExperimentRow),
) -> Result<ExperimentOutput, HarnessError> {
    validate_config(config)?;
    let with_fit = config.mode == Mode::Learning;
    let count = config.market.producers.len();
    let mut rows_out = match &config.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let path = dir.join(format!("rows_{}.csv", config.mode));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(&path, e))?);
            writeln!(w, "{}", row_csv_header(count, with_fit)).map_err(|e| HarnessError::io(&path, e))?;
            Some((path, w))
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(config.sample_sizes.len() * config.runs);
    for &size in &config.sample_sizes {
        let batch = (0..config.runs)
            .into_par_iter()
            .map(|run| run_single(config, size, run))
            .collect::<Result<Vec<_>, _>>()?;
        for row in &batch {
            on_row(row);
        }
        if let Some((path, w)) = rows_out.as_mut() {
            let write = |w: &mut BufWriter<File>| -> io::Result<()> {
                for row in &batch {
                    writeln!(w, "{}", row_csv_line(row, with_fit))?;
                }
                w.flush()
            };
            write(w).map_err(|e| HarnessError::io(path, e))?;
        }
        rows.extend(batch);
    }

    let aggregates = aggregate(&rows);
    if let Some(dir) = &config.output_dir {
        let path = dir.join(format!("aggregate_{}.csv", config.mode));
        write_aggregate_csv(&path, &aggregates, count, with_fit).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(ExperimentOutput { rows, aggregates })
}

fn write_aggregate_csv(path: &Path, aggregates: &[SizeAggregate], count: usize, with_fit: bool) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", aggregate_csv_header(count, with_fit))?;
    for a in aggregates {
        writeln!(w, "{}", aggregate_csv_line(a, with_fit))?;
    }
    w.flush()
}
