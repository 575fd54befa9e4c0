//! One function per listed invariant. Each returns a short report on success
//! and a diagnostic on failure, so the same check can back a unit-style test
//! and the acceptance summary.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::hash::Hasher;

use ccmkt::equilibrium::{joint_dispatch, tatonnement, tatonnement_traced, IterationTrace, TatonnementSettings};
use ccmkt::evaluation::{cvar, evaluate_out_of_sample, redispatch};
use ccmkt::forecast::rng::SplitMix64;
use ccmkt::forecast::{draw_samples, fit_beta_mle, summarize, ErrorDistribution, ForecastDataset};
use ccmkt::harness::experiment::{aggregate_csv_header, row_csv_header};
use ccmkt::harness::seeds::{augmentation_seed, out_of_sample_seed, private_data_seed};
use ccmkt::harness::{out_of_sample_scenarios, run_experiment, ExperimentConfig, Mode};
use ccmkt::market::{
    best_response, build_best_response_qp, expected_cost, ForecastSummary, MarketConfig, Prices, ProducerDecision,
    ProducerParams,
};
use ccmkt::qp::solve_qp;
use ccmkt::centralized_dispatch;

use crate::ensure;

use super::oracles::{kkt_residuals, qp_lattice_oracle, random_qp, redispatch_lattice_oracle};
use super::{below, uniform};

pub type Check = fn() -> Result<String, String>;

/// Every invariant, labelled by module.
pub fn invariant_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("qp: objective matches lattice oracle", qp_matches_lattice_oracle as Check),
        ("qp: KKT residuals within contract", qp_kkt_residuals),
        ("qp: extra inequality never lowers the optimum", qp_added_constraint_monotone),
        ("market: best response continuous in prices", best_response_continuous),
        ("market: best response feasible for own summary", best_response_own_feasible),
        ("market: expected cost at alpha = 0 ignores variance", expected_cost_alpha_zero),
        ("forecast: summary support brackets zero", summary_support_brackets_zero),
        ("forecast: sample generation deterministic", sample_generation_deterministic),
        ("forecast: beta fit error shrinks with data", beta_fit_consistent),
        ("forecast: support grows along nested prefixes", nested_support_monotone),
        ("equilibrium: decisions are best responses", decisions_are_best_responses),
        ("equilibrium: energy price falls under excess supply", energy_price_opposes_imbalance),
        ("equilibrium: symmetric information matches centralized", symmetric_information_equivalence),
        ("equilibrium: bitwise deterministic", equilibrium_deterministic),
        ("evaluation: redispatch balances power", redispatch_balance),
        ("evaluation: redispatch matches lattice oracle", redispatch_matches_lattice_oracle),
        ("evaluation: reliability grows with support", reliability_monotone_in_support),
        ("evaluation: cvar non-increasing in tail", cvar_non_increasing),
        ("harness: seed streams distinct", seed_streams_distinct),
        ("harness: out-of-sample sets paired across modes", out_of_sample_paired),
        ("harness: aggregate recomputable from rows", aggregate_recomputable),
    ]
}

// ---------------------------------------------------------------- qp kernel

/// Worst objective gap to the lattice oracle over `count` random problems.
pub fn qp_oracle_gap(count: usize, seed: u64) -> Result<f64, String> {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0_f64;
    for case in 0..count {
        let rq = random_qp(&mut rng);
        let sol = solve_qp(&rq.problem, 0.0).map_err(|e| format!("case {case}: solver failed: {e}"))?;
        let reference = qp_lattice_oracle(&rq, 400);
        ensure!(reference.is_finite(), "case {case}: oracle found no feasible lattice point");
        let own = rq.objective(sol.x());
        ensure!(
            own <= reference + 1e-7,
            "case {case}: solver objective {own} above oracle {reference}"
        );
        let gap = (own - reference).abs();
        ensure!(gap <= 1e-3, "case {case}: |{own} - {reference}| = {gap:e} (n={})", rq.n);
        worst = worst.max(gap);
    }
    Ok(worst)
}

pub fn qp_matches_lattice_oracle() -> Result<String, String> {
    let worst = qp_oracle_gap(200, 0xA_11CE)?;
    Ok(format!("200 problems, max gap {worst:.2e}"))
}

pub fn qp_kkt_residuals() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xBEEF);
    let mut worst = 0.0_f64;
    for case in 0..1000 {
        let rq = random_qp(&mut rng);
        let sol = solve_qp(&rq.problem, 0.0).map_err(|e| format!("case {case}: {e}"))?;
        let r = kkt_residuals(&rq.problem, &sol);
        ensure!(r.within_contract(), "case {case}: {r:?}");
        worst = worst.max(r.stationarity);
    }
    // The producer subproblems as well, across bound-binding price regimes.
    let market = MarketConfig::two_producer_system();
    for case in 0..500 {
        let summary = random_summary(&mut rng);
        let params = market.producers[case % 2];
        let prices = Prices::new(uniform(&mut rng, -50.0, 300.0), uniform(&mut rng, -3000.0, 100.0));
        let qp = build_best_response_qp(&params, &summary, &prices).map_err(|e| e.to_string())?;
        let sol = solve_qp(&qp, 0.0).map_err(|e| format!("producer case {case}: {e}"))?;
        let r = kkt_residuals(&qp, &sol);
        ensure!(r.within_contract(), "producer case {case}: {r:?}");
    }
    Ok(format!("1500 solutions, max stationarity {worst:.2e}"))
}

pub fn qp_added_constraint_monotone() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xC0FFEE);
    let mut compared = 0;
    for case in 0..300 {
        let rq = random_qp(&mut rng);
        if rq.problem.num_ineq() >= ccmkt::qp::MAX_INEQ {
            continue;
        }
        let base = solve_qp(&rq.problem, 0.0).map_err(|e| format!("case {case}: {e}"))?;
        let row: Vec<f64> = (0..rq.n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let rhs = uniform(&mut rng, -3.0, 3.0);
        let tighter = rq.problem.with_ineq(&row, rhs).map_err(|e| e.to_string())?;
        if let Ok(sol) = solve_qp(&tighter, 0.0) {
            ensure!(
                sol.objective >= base.objective - 1e-9,
                "case {case}: objective fell from {} to {}",
                base.objective,
                sol.objective
            );
            compared += 1;
        }
    }
    ensure!(compared >= 100, "only {compared} feasible pairs");
    Ok(format!("{compared} feasible pairs"))
}

// ------------------------------------------------------------- market model

pub fn random_summary(rng: &mut SplitMix64) -> ForecastSummary {
    ForecastSummary::new(
        uniform(rng, 1.0, 100.0),
        uniform(rng, -30.0, -1.0),
        uniform(rng, 1.0, 30.0),
    )
    .expect("valid by construction")
}

fn random_params(rng: &mut SplitMix64) -> ProducerParams {
    let p_min = uniform(rng, 0.0, 20.0);
    ProducerParams::new(
        p_min,
        p_min + uniform(rng, 10.0, 50.0),
        uniform(rng, 1.0, 20.0),
        uniform(rng, 0.0, 20.0),
        uniform(rng, 0.1, 5.0),
    )
    .expect("valid by construction")
}

pub fn best_response_continuous() -> Result<String, String> {
    let market = MarketConfig::two_producer_system();
    let mut rng = SplitMix64::new(0x5EED);
    let reg = TatonnementSettings::default().alpha_regularization;
    let mut compared = 0;
    let mut worst = 0.0_f64;
    for case in 0..100 {
        let params = market.producers[case % 2];
        let summary = random_summary(&mut rng);
        let prices = Prices::new(uniform(&mut rng, 0.0, 200.0), uniform(&mut rng, -2000.0, 0.0));
        let moved = Prices::new(prices.energy + 1e-6, prices.reserve - 1e-6);
        let mask = |p: &Prices| -> Result<u32, String> {
            let qp = build_best_response_qp(&params, &summary, p).map_err(|e| e.to_string())?;
            Ok(solve_qp(&qp, 0.0).map_err(|e| e.to_string())?.active_mask())
        };
        if mask(&prices)? != mask(&moved)? {
            continue;
        }
        let a = best_response(&params, &summary, &prices, reg).map_err(|e| e.to_string())?;
        let b = best_response(&params, &summary, &moved, reg).map_err(|e| e.to_string())?;
        let shift = (a.p - b.p).abs().max((a.alpha - b.alpha).abs());
        ensure!(shift <= 1e-3, "case {case}: decision moved by {shift:e}");
        worst = worst.max(shift);
        compared += 1;
    }
    ensure!(compared >= 90, "only {compared} of 100 pairs kept the active set");
    Ok(format!("{compared} pairs, max shift {worst:.2e}"))
}

/// The four headroom conditions of a decision under its own summary.
pub fn own_feasibility_violation(params: &ProducerParams, summary: &ForecastSummary, d: &ProducerDecision) -> f64 {
    [
        d.p - d.alpha * summary.w_lo - params.p_max,
        params.p_min - (d.p - d.alpha * summary.w_hi),
        d.alpha * summary.w_hi - params.r_max,
        -d.alpha * summary.w_lo - params.r_max,
        -d.alpha,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

pub fn best_response_own_feasible() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xFEA5);
    let reg = TatonnementSettings::default().alpha_regularization;
    let mut skipped = 0;
    for case in 0..1000 {
        let params = random_params(&mut rng);
        let summary = random_summary(&mut rng);
        let prices = Prices::new(uniform(&mut rng, -50.0, 400.0), uniform(&mut rng, -5000.0, 50.0));
        match best_response(&params, &summary, &prices, reg) {
            Ok(d) => {
                let v = own_feasibility_violation(&params, &summary, &d);
                ensure!(v <= 1e-9, "case {case}: violation {v:e} for {d:?}");
            }
            // A wide support can leave no room between the capacity limits.
            Err(_) => skipped += 1,
        }
    }
    ensure!(skipped < 500, "{skipped} of 1000 cases infeasible");
    Ok(format!("{} decisions checked", 1000 - skipped))
}

pub fn expected_cost_alpha_zero() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xA1FA);
    for case in 0..1000 {
        let params = random_params(&mut rng);
        let d = ProducerDecision {
            p: uniform(&mut rng, params.p_min, params.p_max),
            alpha: 0.0,
        };
        let a = expected_cost(&params, &d, &random_summary(&mut rng));
        let b = expected_cost(&params, &d, &ForecastSummary::deterministic());
        ensure!(a.to_bits() == b.to_bits(), "case {case}: {a} != {b}");
    }
    Ok("1000 cases, exact".into())
}

// ------------------------------------------------------------ forecast data

pub fn summary_support_brackets_zero() -> Result<String, String> {
    let mut rng = SplitMix64::new(0x5u64);
    for case in 0..2000 {
        let len = 1 + below(&mut rng, 50) as usize;
        let shift = uniform(&mut rng, -40.0, 40.0);
        let samples: Vec<f64> = (0..len).map(|_| shift + uniform(&mut rng, -10.0, 10.0)).collect();
        let s = summarize(&ForecastDataset::new(samples, 0)).map_err(|e| e.to_string())?;
        ensure!(s.w_lo <= 0.0 && 0.0 <= s.w_hi, "case {case}: [{}, {}]", s.w_lo, s.w_hi);
        ensure!(s.variance >= 0.0, "case {case}: variance {}", s.variance);
    }
    Ok("2000 datasets".into())
}

pub fn sample_generation_deterministic() -> Result<String, String> {
    // Reference output of SplitMix64 from state zero.
    let mut g = SplitMix64::new(0);
    ensure!(g.next_u64() == 0xE220_A839_7B1D_CDAF, "SplitMix64 reference vector mismatch");
    ensure!(g.next_u64() == 0x6E78_9E6A_A1B9_65F4, "SplitMix64 second reference value mismatch");
    let dists = [
        ErrorDistribution::normal(50.0).map_err(|e| e.to_string())?,
        ErrorDistribution::scaled_beta(5.0, 10.0, 65.0, true).map_err(|e| e.to_string())?,
    ];
    for dist in &dists {
        for seed in [0, 7, u64::MAX] {
            let a = draw_samples(dist, 5000, seed);
            let b = draw_samples(dist, 5000, seed);
            ensure!(
                a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()),
                "{dist:?} seed {seed}: streams differ"
            );
        }
    }
    Ok("bitwise identical".into())
}

/// Mean absolute shape error over `seeds` fits at each sample count.
pub fn beta_fit_errors(counts: &[usize], seeds: u64) -> Result<Vec<f64>, String> {
    let dist = ErrorDistribution::scaled_beta(5.0, 10.0, 1.0, false).map_err(|e| e.to_string())?;
    counts
        .iter()
        .map(|&n| {
            let mut total = 0.0;
            for seed in 0..seeds {
                let data = draw_samples(&dist, n, 1000 + seed);
                let fit = fit_beta_mle(&data, 1.0, 0.0).map_err(|e| format!("n={n} seed {seed}: {e}"))?;
                total += (fit.alpha_hat - 5.0).abs() + (fit.beta_hat - 10.0).abs();
            }
            Ok(total / seeds as f64)
        })
        .collect()
}

pub fn beta_fit_consistent() -> Result<String, String> {
    let errors = beta_fit_errors(&[100, 1000, 10_000, 100_000], 20)?;
    ensure!(
        errors.windows(2).all(|w| w[1] < w[0]),
        "mean errors not decreasing: {errors:?}"
    );
    Ok(format!("mean errors {errors:.3?}"))
}

pub fn nested_support_monotone() -> Result<String, String> {
    let dists = [
        ErrorDistribution::normal(50.0).map_err(|e| e.to_string())?,
        ErrorDistribution::scaled_beta(5.0, 10.0, 65.0, true).map_err(|e| e.to_string())?,
    ];
    for dist in &dists {
        for seed in 0..10 {
            let mut last: Option<ForecastSummary> = None;
            for n in [1, 10, 30, 100, 1000, 10_000] {
                let s = summarize(&draw_samples(dist, n, seed)).map_err(|e| e.to_string())?;
                if let Some(prev) = last {
                    ensure!(
                        s.w_lo <= prev.w_lo && s.w_hi >= prev.w_hi,
                        "{dist:?} seed {seed} n {n}: support shrank"
                    );
                }
                last = Some(s);
            }
        }
    }
    Ok("20 ladders".into())
}

// -------------------------------------------------------------- equilibrium

fn normal_summaries(sizes: &[usize], seed: u64) -> Vec<ForecastSummary> {
    let dist = ErrorDistribution::normal(50.0).expect("valid");
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| summarize(&draw_samples(&dist, n, seed + i as u64)).expect("non-empty"))
        .collect()
}

pub fn decisions_are_best_responses() -> Result<String, String> {
    let market = MarketConfig::two_producer_system();
    let settings = TatonnementSettings::default();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for (sizes, seed) in [([10, 1000], 3), ([100, 30], 8), ([50, 50], 21)] {
        let summaries = normal_summaries(&sizes, seed);
        let eq = tatonnement(&market, &summaries, &settings).map_err(|e| e.to_string())?;
        ensure!(eq.converged, "sizes {sizes:?}: did not converge");
        for ((params, summary), d) in market.producers.iter().zip(&summaries).zip(&eq.decisions) {
            let again = best_response(params, summary, &eq.prices, settings.alpha_regularization)
                .map_err(|e| e.to_string())?;
            let diff = (again.p - d.p).abs().max((again.alpha - d.alpha).abs());
            ensure!(diff <= 1e-6, "sizes {sizes:?}: decision differs by {diff:e}");
            worst = worst.max(diff);
        }
        cases += 1;
    }
    Ok(format!("{cases} equilibria, max difference {worst:.1e}"))
}

pub fn energy_price_opposes_imbalance() -> Result<String, String> {
    let market = MarketConfig::two_producer_system();
    let summaries = normal_summaries(&[100, 100], 5);
    let mut trace = Vec::new();
    let mut checked = (0, 0);
    for start in [300.0, 0.0] {
        trace.clear();
        let settings = TatonnementSettings {
            max_iter: 3000,
            initial_prices: Prices::new(start, -100.0),
            ..TatonnementSettings::default()
        };
        tatonnement_traced(
            &market,
            &summaries,
            &settings,
            Some(IterationTrace {
                every: 1,
                out: &mut trace,
            }),
        )
        .map_err(|e| e.to_string())?;
        let text = String::from_utf8(trace.clone()).map_err(|e| e.to_string())?;
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|v| v.parse().expect("numeric trace")).collect();
                (f[1], f[3])
            })
            .collect();
        for w in rows.windows(2) {
            let ((price, residual), (next, _)) = (w[0], w[1]);
            if residual > 0.0 {
                ensure!(next < price, "excess supply {residual} but price {price} -> {next}");
                checked.0 += 1;
            } else if residual < 0.0 {
                ensure!(next > price, "excess demand {residual} but price {price} -> {next}");
                checked.1 += 1;
            }
        }
    }
    ensure!(checked.0 > 0 && checked.1 > 0, "trace covered only one side: {checked:?}");
    Ok(format!("{} surplus and {} deficit iterates", checked.0, checked.1))
}

/// Largest gaps between the price iteration and the centralized dispatch
/// over shared Normal(50) datasets of `size` samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct EquivalenceGap {
    pub dispatch: f64,
    pub energy_price: f64,
    pub reserve_price: f64,
    pub all_converged: bool,
}

pub fn equivalence_gap(datasets: u64, size: usize, settings: &TatonnementSettings) -> Result<EquivalenceGap, String> {
    let market = MarketConfig::two_producer_system();
    let dist = ErrorDistribution::normal(50.0).map_err(|e| e.to_string())?;
    let mut gap = EquivalenceGap {
        all_converged: true,
        ..Default::default()
    };
    for seed in 0..datasets {
        let shared = summarize(&draw_samples(&dist, size, 4000 + seed)).map_err(|e| e.to_string())?;
        let central = centralized_dispatch(&market, &shared).map_err(|e| e.to_string())?;
        let eq = tatonnement(&market, &[shared, shared], settings).map_err(|e| e.to_string())?;
        gap.all_converged &= eq.converged;
        for (a, b) in eq.decisions.iter().zip(&central.decisions) {
            gap.dispatch = gap.dispatch.max((a.p - b.p).abs()).max((a.alpha - b.alpha).abs());
        }
        gap.energy_price = gap.energy_price.max((eq.prices.energy - central.prices.energy).abs());
        gap.reserve_price = gap.reserve_price.max((eq.prices.reserve - central.prices.reserve).abs());
    }
    Ok(gap)
}

/// Prices are compared at a residual tolerance of 1e-5: at the default 1e-3
/// the reserve price is pinned only to about `tol / (d sum alpha / d price)`,
/// which is tenths of a dollar when one producer's reserve offer is at a
/// bound.
pub fn symmetric_information_equivalence() -> Result<String, String> {
    let settings = TatonnementSettings {
        tol: 1e-5,
        ..TatonnementSettings::default()
    };
    let gap = equivalence_gap(10, 10_000, &settings)?;
    ensure!(gap.all_converged, "a run did not converge");
    ensure!(gap.dispatch <= 1e-2, "dispatch gap {:e}", gap.dispatch);
    ensure!(
        gap.energy_price <= 1e-2 && gap.reserve_price <= 1e-2,
        "price gaps {:e} / {:e}",
        gap.energy_price,
        gap.reserve_price
    );
    Ok(format!(
        "10 datasets, dispatch {:.1e}, prices {:.1e} / {:.1e}",
        gap.dispatch, gap.energy_price, gap.reserve_price
    ))
}

pub fn equilibrium_deterministic() -> Result<String, String> {
    let market = MarketConfig::two_producer_system();
    let summaries = normal_summaries(&[10, 300], 13);
    let settings = TatonnementSettings::default();
    let a = tatonnement(&market, &summaries, &settings).map_err(|e| e.to_string())?;
    let b = tatonnement(&market, &summaries, &settings).map_err(|e| e.to_string())?;
    let bits = |r: &ccmkt::EquilibriumResult| {
        let mut v = vec![
            r.prices.energy.to_bits(),
            r.prices.reserve.to_bits(),
            r.energy_residual.to_bits(),
            r.reserve_residual.to_bits(),
            r.iterations,
        ];
        v.extend(r.decisions.iter().flat_map(|d| [d.p.to_bits(), d.alpha.to_bits()]));
        v
    };
    ensure!(bits(&a) == bits(&b), "runs differ");
    Ok(format!("{} iterations reproduced", a.iterations))
}

// --------------------------------------------------------------- evaluation

fn random_nominal(rng: &mut SplitMix64, market: &MarketConfig) -> Vec<f64> {
    market
        .producers
        .iter()
        .map(|p| uniform(rng, p.p_min, p.p_max))
        .collect()
}

pub fn redispatch_balance() -> Result<String, String> {
    let market = MarketConfig::two_producer_system();
    let mut rng = SplitMix64::new(0xBA1A);
    let mut worst = 0.0_f64;
    for case in 0..5000 {
        let nominal = random_nominal(&mut rng, &market);
        let w_s = uniform(&mut rng, -market.wind_forecast, 80.0);
        let o = redispatch(&market, &nominal, w_s).map_err(|e| format!("case {case}: {e}"))?;
        let residual = o.balance_residual(w_s).abs();
        ensure!(residual <= 1e-7, "case {case}: residual {residual:e}");
        ensure!(o.spillage >= 0.0 && o.shedding >= 0.0, "case {case}: negative slack");
        ensure!(
            o.violated == (o.spillage > 1e-6 || o.shedding > 1e-6),
            "case {case}: violation flag inconsistent"
        );
        worst = worst.max(residual);
    }
    Ok(format!("5000 scenarios, max residual {worst:.1e}"))
}

/// Worst gap between [`redispatch`] and the 0.01 MW lattice oracle.
pub fn redispatch_oracle_gap(count: usize, seed: u64) -> Result<f64, String> {
    let market = MarketConfig::two_producer_system();
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0_f64;
    for case in 0..count {
        let nominal = random_nominal(&mut rng, &market);
        let w_s = uniform(&mut rng, -45.0, 45.0);
        let o = redispatch(&market, &nominal, w_s).map_err(|e| format!("case {case}: {e}"))?;
        let reference = redispatch_lattice_oracle(&market, &nominal, w_s, 0.01);
        let gap = (o.total_cost - reference).abs();
        ensure!(
            gap <= 1e-2,
            "case {case}: nominal {nominal:?}, w_s {w_s}: cost {} vs oracle {reference}",
            o.total_cost
        );
        worst = worst.max(gap);
    }
    Ok(worst)
}

pub fn redispatch_matches_lattice_oracle() -> Result<String, String> {
    let worst = redispatch_oracle_gap(20, 0xD15)?;
    Ok(format!("20 scenarios, max gap {worst:.1e} $"))
}

/// Mean reliability over `seeds` along a ladder of nested private datasets.
pub fn reliability_ladder(sizes: &[usize], seeds: u64) -> Result<Vec<f64>, String> {
    let market = MarketConfig::two_producer_system();
    let dist = ErrorDistribution::normal(50.0).map_err(|e| e.to_string())?;
    let scenarios = draw_samples(&dist, 10_000, 0x0055);
    let mut means = vec![0.0; sizes.len()];
    for seed in 0..seeds {
        for (slot, &n) in means.iter_mut().zip(sizes) {
            let summaries: Vec<ForecastSummary> = (0..2)
                .map(|i| summarize(&draw_samples(&dist, n, 7000 + 2 * seed + i)).expect("non-empty"))
                .collect();
            let eq = joint_dispatch(&market, &summaries, TatonnementSettings::default().alpha_regularization)
                .map_err(|e| e.to_string())?;
            let stats = evaluate_out_of_sample(&market, &eq, &scenarios).map_err(|e| e.to_string())?;
            *slot += stats.reliability / seeds as f64;
        }
    }
    Ok(means)
}

pub fn reliability_monotone_in_support() -> Result<String, String> {
    let means = reliability_ladder(&[10, 30, 100, 1000, 10_000], 10)?;
    ensure!(
        means.windows(2).all(|w| w[1] >= w[0]),
        "mean reliability along the ladder: {means:?}"
    );
    Ok(format!("mean reliability {means:.4?}"))
}

pub fn cvar_non_increasing() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xC7A8);
    for case in 0..1000 {
        let len = 1 + below(&mut rng, 500) as usize;
        let costs: Vec<f64> = (0..len).map(|_| uniform(&mut rng, -100.0, 5000.0)).collect();
        let values = [0.01, 0.05, 0.25, 1.0]
            .iter()
            .map(|&t| cvar(&costs, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        ensure!(values.windows(2).all(|w| w[1] <= w[0]), "case {case}: {values:?}");
    }
    Ok("1000 vectors".into())
}

// ------------------------------------------------------------------ harness

fn stream_hash(seed: u64) -> u64 {
    let dist = ErrorDistribution::normal(50.0).expect("valid");
    let mut h = DefaultHasher::new();
    for v in draw_samples(&dist, 32, seed).samples {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

pub fn seed_streams_distinct() -> Result<String, String> {
    let config = ExperimentConfig::default();
    let mut seen: HashMap<u64, String> = HashMap::new();
    let mut insert = |label: String, seed: u64| -> Result<(), String> {
        match seen.insert(stream_hash(seed), label.clone()) {
            Some(other) => Err(format!("{label} repeats the stream of {other}")),
            None => Ok(()),
        }
    };
    for base in [config.base_seed, config.base_seed + 1, 0] {
        for &size in &config.sample_sizes {
            for run in 0..config.runs {
                for producer in 0..config.market.producers.len() {
                    insert(
                        format!("private({base},{size},{run},{producer})"),
                        private_data_seed(base, size, run, producer),
                    )?;
                    insert(
                        format!("augment({base},{size},{run},{producer})"),
                        augmentation_seed(base, size, run, producer),
                    )?;
                }
            }
        }
        for run in 0..config.runs {
            insert(format!("oos({base},{run})"), out_of_sample_seed(base, run))?;
        }
    }
    Ok(format!("{} streams", seen.len()))
}

pub fn out_of_sample_paired() -> Result<String, String> {
    let base = ExperimentConfig {
        distribution: ErrorDistribution::scaled_beta(5.0, 10.0, 65.0, true).map_err(|e| e.to_string())?,
        oos_count: 2000,
        ..ExperimentConfig::default()
    };
    for run in 0..base.runs {
        let sets: Vec<ForecastDataset> = [Mode::Baseline, Mode::Learning, Mode::Sharing]
            .into_iter()
            .map(|mode| out_of_sample_scenarios(&ExperimentConfig { mode, ..base.clone() }, run))
            .collect();
        ensure!(
            sets.windows(2).all(|w| w[0] == w[1]),
            "run {run}: scenario sets differ between modes"
        );
    }
    let distinct: HashSet<u64> = (0..base.runs)
        .map(|run| out_of_sample_scenarios(&base, run).samples[0].to_bits())
        .collect();
    ensure!(distinct.len() == base.runs, "runs share scenario sets");
    Ok(format!("{} runs", base.runs))
}

/// Small sweep used by the cross-file consistency check: a coarser price step
/// keeps it quick without changing what is being checked.
pub fn small_sweep_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut config = ExperimentConfig {
        sample_sizes: vec![10, 30],
        runs: 3,
        oos_count: 500,
        output_dir: Some(dir.to_path_buf()),
        ..ExperimentConfig::default()
    };
    config.solver.rho = 1e-4;
    config
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

pub fn aggregate_recomputable() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = small_sweep_config(dir.path());
    run_experiment(&config).map_err(|e| e.to_string())?;
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).map_err(|e| format!("{name}: {e}"));
    let (row_header, rows) = parse_csv(&read("rows_baseline.csv")?);
    let (agg_header, aggs) = parse_csv(&read("aggregate_baseline.csv")?);
    ensure!(row_header.join(",") == row_csv_header(2, false), "row header changed");
    ensure!(agg_header.join(",") == aggregate_csv_header(2, false), "aggregate header changed");
    let col = |header: &[String], name: &str| header.iter().position(|h| h == name).expect("column");
    let num = |s: &str| s.parse::<f64>().expect("numeric");

    for agg in &aggs {
        let size = &agg[col(&agg_header, "sample_size")];
        let cell: Vec<&Vec<String>> = rows.iter().filter(|r| &r[col(&row_header, "sample_size")] == size).collect();
        ensure!(
            agg[col(&agg_header, "runs")] == cell.len().to_string(),
            "size {size}: run count"
        );
        let converged: Vec<&&Vec<String>> = cell.iter().filter(|r| r[col(&row_header, "converged")] == "true").collect();
        ensure!(
            agg[col(&agg_header, "converged")] == converged.len().to_string(),
            "size {size}: converged count"
        );
        let mut fields: Vec<String> = ["reliability", "mean_cost", "cvar5"].map(String::from).to_vec();
        fields.extend((1..=2).map(|i| format!("payoff_{i}")));
        for field in &fields {
            let values: Vec<f64> = converged.iter().map(|r| num(&r[col(&row_header, field)])).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (suffix, expected) in [("mean", mean), ("min", min), ("max", max)] {
                let got = num(&agg[col(&agg_header, &format!("{field}_{suffix}"))]);
                ensure!(
                    (got - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
                    "size {size}: {field}_{suffix} {got} vs {expected}"
                );
            }
        }
        for (field, column) in [("var", "dvar_1_2"), ("width", "dwidth_1_2")] {
            let value = |r: &Vec<String>, i: usize| match field {
                "var" => num(&r[col(&row_header, &format!("var_{i}"))]),
                _ => num(&r[col(&row_header, &format!("whi_{i}"))]) - num(&r[col(&row_header, &format!("wlo_{i}"))]),
            };
            let expected = cell
                .iter()
                .map(|r| (value(r, 1) - value(r, 2)).powi(2))
                .sum::<f64>()
                .sqrt();
            let got = num(&agg[col(&agg_header, column)]);
            ensure!(
                (got - expected).abs() <= 1e-9 * (1.0 + expected),
                "size {size}: {column} {got} vs {expected}"
            );
        }
    }
    Ok(format!("{} rows, {} aggregates", rows.len(), aggs.len()))
}
