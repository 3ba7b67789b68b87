//! The experiment runners. Each validates its preconditions, fans
//! replications out over per-replication RNG streams, and reduces
//! deterministically.

use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use super::*;
use crate::analytic;
use crate::numerics::stats;
use crate::rate_fn::{GrowthClass, StabilityClass};
use crate::sim::{JumpStream, Method};

/// Counts at the given ascending checkpoint times in one streaming pass.
/// Returns the counts and whether the event guard tripped.
fn counts_at_checkpoints(
    rf: &RateFunction,
    gamma: f64,
    max_events: u64,
    rng: &mut ChaCha8Rng,
    checkpoints: &[f64],
) -> (Vec<u64>, bool) {
    let horizon = *checkpoints.last().unwrap();
    let mut stream = JumpStream::new(rf, gamma, Method::Auto).expect("validated spec");
    let mut counts = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0usize;
    let mut exploded = false;
    while let Some(t) = stream.next_jump(rng, horizon) {
        while next_cp < checkpoints.len() && checkpoints[next_cp] < t {
            counts.push(stream.count() - 1); // count before this jump
            next_cp += 1;
        }
        if stream.count() >= max_events {
            exploded = true;
            break;
        }
    }
    while next_cp < checkpoints.len() {
        counts.push(stream.count());
        next_cp += 1;
    }
    (counts, exploded)
}

fn count_at(
    rf: &RateFunction,
    gamma: f64,
    max_events: u64,
    rng: &mut ChaCha8Rng,
    horizon: f64,
) -> (u64, bool) {
    let (counts, exploded) = counts_at_checkpoints(rf, gamma, max_events, rng, &[horizon]);
    (counts[0], exploded)
}

/// Counts of `N` at checkpoint times for every replication of a block;
/// exposed for oracle tests that compare against the closed-form moments.
pub fn sample_counts(
    rf: &RateFunction,
    gamma: f64,
    max_events: u64,
    master_seed: u64,
    block: u64,
    replications: u32,
    checkpoints: &[f64],
) -> Vec<Vec<u64>> {
    par_map_block(master_seed, block, replications, |rng| {
        counts_at_checkpoints(rf, gamma, max_events, rng, checkpoints).0
    })
}

fn base_report(spec: &ExperimentSpec, derived: Derived) -> ExperimentReport {
    ExperimentReport {
        kind: spec.kind,
        spec_hash: spec.hash(),
        master_seed: spec.master_seed,
        replications: spec.replications,
        flags: Vec::new(),
        checkpoints: Vec::new(),
        derived,
        wall_time_secs: 0.0,
    }
}

// ---------------------------------------------------------------------------
// LLN
// ---------------------------------------------------------------------------

pub fn run_lln(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    if matches!(spec.rf.classify_growth(), GrowthClass::Superlinear { .. }) {
        return Err(McError::SpecRejected(
            "law-of-large-numbers runs need a non-explosive rate".into(),
        ));
    }
    let fps = spec
        .rf
        .find_fixed_points(spec.rf.default_search_hi())
        .map_err(|e| McError::InvalidSpec(e.to_string()))?;
    if !fps.complete {
        return Err(McError::SpecRejected(
            "fixed-point search is not provably complete at the default bound".into(),
        ));
    }
    let tolerance = spec.params.tolerance.unwrap_or(0.1);
    let stable = fps.stable_locations();
    let unstable = fps.unstable_locations();

    let mut per_horizon = Vec::new();
    let mut checkpoints = Vec::new();
    let mut flags = Vec::new();
    for (block, &horizon) in spec.horizons.iter().enumerate() {
        let results = par_map_block(spec.master_seed, block as u64, spec.replications, |rng| {
            count_at(&spec.rf, spec.gamma, spec.max_events, rng, horizon)
        });
        if results.iter().any(|(_, exploded)| *exploded) {
            flags.push(format!("explosion_guard_tripped@T={horizon}"));
        }
        let ys: Vec<f64> = results.iter().map(|(n, _)| *n as f64 / horizon).collect();
        let near_stable: Vec<(f64, f64)> = stable
            .iter()
            .map(|&x| {
                let frac = ys.iter().filter(|&&y| (y - x).abs() < tolerance).count() as f64
                    / ys.len() as f64;
                (x, frac)
            })
            .collect();
        let near_unstable = ys
            .iter()
            .filter(|&&y| unstable.iter().any(|&x| (y - x).abs() < tolerance))
            .count() as f64
            / ys.len() as f64;
        let elsewhere = ys
            .iter()
            .filter(|&&y| {
                !fps.points.iter().any(|p| match p.class {
                    StabilityClass::Interval { lo, hi } => {
                        y >= lo - tolerance && y <= hi + tolerance
                    }
                    _ => (y - p.location).abs() < tolerance,
                })
            })
            .count() as f64
            / ys.len() as f64;
        per_horizon.push(LlnHorizon {
            t: horizon,
            near_stable,
            near_unstable,
            elsewhere,
        });
        checkpoints.push(summarize(format!("T={horizon}"), horizon, &ys));
    }
    let mut report = base_report(
        spec,
        Derived::Lln {
            tolerance,
            per_horizon,
        },
    );
    report.checkpoints = checkpoints;
    report.flags = flags;
    Ok(report)
}

// ---------------------------------------------------------------------------
// CLT
// ---------------------------------------------------------------------------

pub fn run_clt(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let (alpha, beta) = match spec.rf.kind() {
        crate::rate_fn::RateKind::Affine { alpha, beta } if *alpha < 0.5 => (*alpha, *beta),
        crate::rate_fn::RateKind::Affine { .. } => {
            return Err(McError::SpecRejected(
                "the Gaussian limit holds for affine rates with slope below 1/2".into(),
            ))
        }
        _ => return Err(McError::SpecRejected("clt runs need an affine rate".into())),
    };
    if spec.gamma != 0.0 {
        return Err(McError::SpecRejected(
            "clt normalization assumes gamma = 0".into(),
        ));
    }
    let horizon = *spec.horizons.last().unwrap();
    let results = par_map_block(spec.master_seed, 0, spec.replications, |rng| {
        count_at(&spec.rf, spec.gamma, spec.max_events, rng, horizon).0
    });
    let center = beta * horizon / (1.0 - alpha);
    let zs: Vec<f64> = results
        .iter()
        .map(|&n| (n as f64 - center) / horizon.sqrt())
        .collect();
    let predicted_variance = beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha));
    let mean_bias = (analytic::mean_affine(alpha, beta, horizon) - center) / horizon.sqrt();
    let normal = Normal::new(0.0, predicted_variance.sqrt()).expect("positive variance");
    let ks_distance = stats::ks_distance(
        &zs.iter().map(|z| z - mean_bias).collect::<Vec<f64>>(),
        |x| normal.cdf(x),
    );
    let ks_distance_uncorrected = stats::ks_distance(&zs, |x| normal.cdf(x));
    let derived = Derived::Clt {
        predicted_variance,
        sample_variance: stats::sample_variance(&zs),
        sample_variance_std_error: stats::variance_std_error(&zs),
        mean_bias,
        ks_distance,
        ks_distance_uncorrected,
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = vec![summarize(format!("T={horizon}"), horizon, &zs)];
    Ok(report)
}

// ---------------------------------------------------------------------------
// Gamma scaling limit
// ---------------------------------------------------------------------------

pub fn run_gamma_limit(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let alpha = match spec.rf.kind() {
        crate::rate_fn::RateKind::Affine { alpha, beta } if *beta == 0.0 && *alpha > 0.0 => *alpha,
        _ => {
            return Err(McError::SpecRejected(
                "the gamma scaling limit needs a pure linear rate (zero intercept)".into(),
            ))
        }
    };
    if !(spec.gamma > 0.0) {
        return Err(McError::SpecRejected(
            "gamma = 0 makes the linear-rate process degenerate at zero".into(),
        ));
    }
    let horizon = *spec.horizons.last().unwrap();
    let counts = par_map_block(spec.master_seed, 0, spec.replications, |rng| {
        count_at(&spec.rf, spec.gamma, spec.max_events, rng, horizon).0
    });
    let scale = horizon.powf(alpha);
    let ws: Vec<f64> = counts.iter().map(|&n| n as f64 / scale).collect();
    let gamma_law = Gamma::new(spec.gamma, 1.0).expect("positive shape");
    let ks_distance = stats::ks_distance(&ws, |x| gamma_law.cdf(x));
    let derived = Derived::GammaLimit {
        shape: spec.gamma,
        ks_distance,
        mean: stats::mean(&ws),
        mean_std_error: stats::std_error(&ws),
        variance: stats::sample_variance(&ws),
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = vec![summarize(format!("T={horizon}"), horizon, &ws)];
    Ok(report)
}

/// Total-variation distance between the empirical law of integer counts and
/// the exact negative-binomial marginal; used as the exact-law oracle.
pub fn tv_distance_to_exact_law(counts: &[u64], alpha: f64, gamma: f64, t: f64) -> f64 {
    let k_hi = *counts.iter().max().unwrap() as usize;
    let mut empirical = vec![0.0f64; k_hi + 1];
    for &c in counts {
        empirical[c as usize] += 1.0 / counts.len() as f64;
    }
    let mut tv = 0.0;
    let mut exact_mass = 0.0;
    for (k, &e) in empirical.iter().enumerate() {
        let p = analytic::negbin_pmf(alpha, gamma, t, k as u64);
        exact_mass += p;
        tv += (e - p).abs();
    }
    // Mass of the exact law beyond the observed support.
    tv += (1.0 - exact_mass).max(0.0);
    0.5 * tv
}

// ---------------------------------------------------------------------------
// Basin probabilities
// ---------------------------------------------------------------------------

pub fn run_basin(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let grid = spec
        .gamma_grid
        .as_ref()
        .ok_or_else(|| McError::InvalidSpec("basin runs need a gamma_grid".into()))?;
    let fps = spec
        .rf
        .find_fixed_points(spec.rf.default_search_hi())
        .map_err(|e| McError::InvalidSpec(e.to_string()))?;
    let stable = fps.stable_locations();
    if stable.len() < 2 {
        return Err(McError::SpecRejected(format!(
            "basin attribution needs at least two stable fixed points, found {}",
            stable.len()
        )));
    }
    let all_points: Vec<f64> = fps
        .points
        .iter()
        .filter(|p| !matches!(p.class, StabilityClass::Interval { .. }))
        .map(|p| p.location)
        .collect();
    let cap = spec.params.attribution_cap.unwrap_or(0.25);
    // Attribution radius per stable point: half the gap to the nearest other
    // fixed point, capped; honest "unresolved" accounting outside the radii.
    let tolerances: Vec<f64> = stable
        .iter()
        .map(|&x| {
            let min_gap = all_points
                .iter()
                .filter(|&&o| (o - x).abs() > 1e-12)
                .map(|&o| (o - x).abs())
                .fold(f64::INFINITY, f64::min);
            (0.5 * min_gap).min(cap)
        })
        .collect();
    let horizon = *spec.horizons.last().unwrap();

    let mut per_gamma = Vec::new();
    let mut checkpoints = Vec::new();
    let mut flags = Vec::new();
    for (block, &gamma) in grid.iter().enumerate() {
        let ys: Vec<f64> =
            par_map_block(spec.master_seed, block as u64, spec.replications, |rng| {
                count_at(&spec.rf, gamma, spec.max_events, rng, horizon).0 as f64 / horizon
            });
        let n = ys.len() as f64;
        let mut counts = vec![0u32; stable.len()];
        let mut unresolved = 0u32;
        for &y in &ys {
            let mut attributed = false;
            for (i, (&x, &tol)) in stable.iter().zip(&tolerances).enumerate() {
                if (y - x).abs() < tol {
                    counts[i] += 1;
                    attributed = true;
                    break;
                }
            }
            if !attributed {
                unresolved += 1;
            }
        }
        let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let p_hat_std_error: Vec<f64> = p_hat.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
        let unresolved_frac = unresolved as f64 / n;
        if unresolved_frac > 0.1 {
            flags.push(format!("unresolved_fraction_above_10pct@gamma={gamma}"));
        }
        per_gamma.push(BasinPoint {
            gamma,
            p_hat,
            p_hat_std_error,
            unresolved: unresolved_frac,
        });
        checkpoints.push(summarize(
            format!("gamma={gamma};T={horizon}"),
            horizon,
            &ys,
        ));
    }

    // Monotonicity of the lowest-basin frequency, in per-point SEs.
    let p1: Vec<f64> = per_gamma.iter().map(|b| b.p_hat[0]).collect();
    let fit = stats::pava_nonincreasing(&p1);
    let monotonicity_violation_se = per_gamma
        .iter()
        .zip(&fit)
        .map(|(b, &f)| (b.p_hat[0] - f).abs() / b.p_hat_std_error[0].max(1e-9))
        .fold(0.0f64, f64::max);
    let unresolved_overall =
        per_gamma.iter().map(|b| b.unresolved).sum::<f64>() / per_gamma.len() as f64;

    let derived = Derived::Basin {
        stable_points: stable,
        attribution_tolerances: tolerances,
        per_gamma,
        unresolved_overall,
        monotonicity_violation_se,
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = checkpoints;
    report.flags = flags;
    Ok(report)
}

// ---------------------------------------------------------------------------
// L² convergence rate to the deterministic flow
// ---------------------------------------------------------------------------

pub fn run_l2_rate(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let alpha = match spec.rf.kind() {
        crate::rate_fn::RateKind::Affine { alpha, beta } if *alpha < 1.0 && *beta > 0.0 => *alpha,
        _ => {
            return Err(McError::SpecRejected(
                "the L2-rate bound is for affine rates with slope < 1 and positive intercept"
                    .into(),
            ))
        }
    };
    if spec.gamma != 0.0 {
        return Err(McError::SpecRejected(
            "the L2-rate comparison starts the flow and the process at zero".into(),
        ));
    }
    let horizon = *spec.horizons.last().unwrap();
    let checkpoints: Vec<f64> = match &spec.params.checkpoints {
        Some(c) => c.clone(),
        None => {
            if horizon <= 10.0 {
                return Err(McError::InvalidSpec(
                    "default checkpoints need a horizon above 10".into(),
                ));
            }
            let n = 13usize;
            let (lo, hi) = (10.0f64.ln(), horizon.ln());
            (0..n)
                .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    };
    if checkpoints.len() < 3 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(McError::InvalidSpec(
            "need at least 3 increasing checkpoints".into(),
        ));
    }
    let flow = analytic::flow_at_times(&spec.rf, 0.0, &checkpoints)?;
    let sq_devs: Vec<Vec<f64>> = par_map_block(spec.master_seed, 0, spec.replications, |rng| {
        let (counts, _) = counts_at_checkpoints(&spec.rf, 0.0, spec.max_events, rng, &checkpoints);
        counts
            .iter()
            .zip(&checkpoints)
            .zip(&flow)
            .map(|((&n, &t), &ybar)| {
                let y = n as f64 / (t + 1.0);
                (y - ybar) * (y - ybar)
            })
            .collect()
    });
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut summaries = Vec::with_capacity(checkpoints.len());
    for (j, &t) in checkpoints.iter().enumerate() {
        let col: Vec<f64> = sq_devs.iter().map(|row| row[j]).collect();
        points.push((t, stats::mean(&col), stats::std_error(&col)));
        summaries.push(summarize(format!("t={t}"), t, &col));
    }
    // Fit on the upper decade.
    let upper: Vec<&(f64, f64, f64)> = points
        .iter()
        .filter(|(t, _, _)| *t >= horizon / 10.0)
        .collect();
    let half_slope_window = (alpha - 0.5).abs() < 1e-9;
    let (fitted_slope, predicted_slope, log_model_ratios) = if half_slope_window {
        let reference = {
            let (t, m, _) = **upper.last().unwrap();
            m * t / t.ln()
        };
        let ratios: Vec<f64> = upper
            .iter()
            .map(|(t, m, _)| m * t / t.ln() / reference)
            .collect();
        (None, None, Some(ratios))
    } else {
        let xs: Vec<f64> = upper.iter().map(|(t, _, _)| t.ln()).collect();
        let ys: Vec<f64> = upper.iter().map(|(_, m, _)| m.ln()).collect();
        let predicted = if alpha < 0.5 {
            -1.0
        } else {
            -2.0 * (1.0 - alpha)
        };
        (Some(stats::ols_slope(&xs, &ys)), Some(predicted), None)
    };
    let derived = Derived::L2Rate {
        points,
        fitted_slope,
        predicted_slope,
        log_model_ratios,
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = summaries;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Fluid limits for large initial conditions
// ---------------------------------------------------------------------------

pub fn run_fluid_limit(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let grid = spec
        .gamma_grid
        .as_ref()
        .ok_or_else(|| McError::InvalidSpec("fluid-limit runs need a gamma_grid".into()))?;
    let horizon = *spec.horizons.last().unwrap();
    // Fluid curve c(s) and the normalizer exponent per regime.
    let (curve, beta_exp): (Box<dyn Fn(f64) -> f64 + Sync>, f64) = match spec.rf.classify_growth() {
        GrowthClass::AsymptoticallyLinear { alpha_lim } => {
            (Box::new(move |s: f64| (s + 1.0).powf(alpha_lim) - 1.0), 1.0)
        }
        GrowthClass::Sublinear { alpha, beta_exp } => (
            Box::new(move |s: f64| {
                alpha / (1.0 - beta_exp) * ((s + 1.0).powf(1.0 - beta_exp) - 1.0)
            }),
            beta_exp,
        ),
        other => {
            return Err(McError::SpecRejected(format!(
                "fluid limits need an asymptotically linear or sublinear rate, got {other:?}"
            )))
        }
    };
    debug_assert_eq!(curve(0.0), 0.0);

    let mut per_gamma = Vec::new();
    let mut checkpoints = Vec::new();
    let mut flags = Vec::new();
    for (block, &gamma) in grid.iter().enumerate() {
        let normalizer = gamma.powf(beta_exp);
        let sups: Vec<f64> =
            par_map_block(spec.master_seed, block as u64, spec.replications, |rng| {
                // Exact sup over [0, horizon]: N/norm is piecewise constant
                // and the curve is increasing, so the deviation peaks at jump
                // times (before and after) and at the horizon.
                let mut stream = JumpStream::new(&spec.rf, gamma, Method::Auto).expect("validated");
                let mut sup = 0.0f64;
                let mut n = 0u64;
                while let Some(t) = stream.next_jump(rng, horizon) {
                    let c = curve(t);
                    sup = sup.max((n as f64 / normalizer - c).abs());
                    n += 1;
                    sup = sup.max((n as f64 / normalizer - c).abs());
                    if n >= spec.max_events {
                        return f64::INFINITY;
                    }
                }
                sup.max((n as f64 / normalizer - curve(horizon)).abs())
            });
        if sups.iter().any(|s| s.is_infinite()) {
            flags.push(format!("explosion_guard_tripped@gamma={gamma}"));
        }
        per_gamma.push(FluidPoint {
            gamma,
            normalizer,
            median_sup_deviation: stats::median(&sups),
            q95_sup_deviation: stats::quantiles(&sups, &[0.95])[0],
        });
        checkpoints.push(summarize(
            format!("gamma={gamma};T={horizon}"),
            horizon,
            &sups,
        ));
    }
    let mut report = base_report(spec, Derived::FluidLimit { per_gamma });
    report.checkpoints = checkpoints;
    report.flags = flags;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Tail probabilities from the exact ladder
// ---------------------------------------------------------------------------

pub fn run_tail(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let t = *spec.horizons.last().unwrap();
    let law = analytic::tail_asymptote(&spec.rf, t)?;
    if law == TailLaw::NoDecay {
        return Err(McError::SpecRejected(
            "superlinear rates keep positive mass at infinity; the tail does not vanish".into(),
        ));
    }
    let ell_grid = spec.params.ell_grid.clone().unwrap_or_else(|| match law {
        TailLaw::Exponential { .. } => vec![50, 100, 200],
        _ => vec![40, 70, 100],
    });
    if ell_grid.is_empty() || ell_grid.iter().any(|&l| l < 2) {
        return Err(McError::InvalidSpec("ell_grid entries must be >= 2".into()));
    }
    let max_ell = *ell_grid.iter().max().unwrap();
    let k_max = spec.params.k_max.unwrap_or(max_ell as usize + 80);
    if k_max <= max_ell as usize {
        return Err(McError::InvalidSpec(
            "k_max must exceed the largest ell".into(),
        ));
    }

    // Exact marginal for the pure linear rate; log-space ladder otherwise.
    let pure_linear_alpha = match spec.rf.kind() {
        crate::rate_fn::RateKind::Affine { alpha, beta }
            if *beta == 0.0 && *alpha > 0.0 && spec.gamma > 0.0 =>
        {
            Some(*alpha)
        }
        _ => None,
    };
    let points: Vec<TailPoint> = if let Some(alpha) = pure_linear_alpha {
        ell_grid
            .iter()
            .map(|&ell| {
                let log_sf = analytic::negbin_log_sf(alpha, spec.gamma, t, ell);
                TailPoint {
                    ell,
                    log_sf,
                    normalized: normalize_tail(&law, ell, log_sf),
                }
            })
            .collect()
    } else {
        let logs = analytic::log_pmf_ladder(&spec.rf, spec.gamma, t, k_max)?;
        ell_grid
            .iter()
            .map(|&ell| {
                let log_sf = analytic::log_tail_from_ladder(&logs, ell as usize);
                TailPoint {
                    ell,
                    log_sf,
                    normalized: normalize_tail(&law, ell, log_sf),
                }
            })
            .collect()
    };
    let predicted = match law {
        TailLaw::Exponential { rate } => -rate,
        TailLaw::PoissonType { coefficient } => coefficient,
        TailLaw::NoDecay => unreachable!(),
    };
    Ok(base_report(
        spec,
        Derived::Tail {
            law,
            predicted,
            points,
        },
    ))
}

fn normalize_tail(law: &TailLaw, ell: u64, log_sf: f64) -> f64 {
    match law {
        TailLaw::Exponential { .. } => log_sf / ell as f64,
        _ => log_sf / (ell as f64 * (ell as f64).ln()),
    }
}

// ---------------------------------------------------------------------------
// Explosion fraction
// ---------------------------------------------------------------------------

pub fn run_explosion(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let horizon = *spec.horizons.last().unwrap();
    let outcomes = par_map_block(spec.master_seed, 0, spec.replications, |rng| {
        count_at(&spec.rf, spec.gamma, spec.max_events, rng, horizon).1
    });
    let exploded = outcomes.iter().filter(|&&e| e).count() as u32;
    let n = spec.replications as f64;
    let fraction = exploded as f64 / n;
    let ci99 = wilson_interval(exploded as f64, n, 2.575829303548901);
    let void_lower_bound = analytic::void_probability(&spec.rf, spec.gamma, horizon)?;
    let indicator: Vec<f64> = outcomes
        .iter()
        .map(|&e| if e { 1.0 } else { 0.0 })
        .collect();
    let derived = Derived::Explosion {
        exploded,
        fraction,
        ci99,
        void_lower_bound,
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = vec![summarize(format!("T={horizon}"), horizon, &indicator)];
    Ok(report)
}

/// Wilson score interval for a binomial proportion.
fn wilson_interval(successes: f64, n: f64, z: f64) -> (f64, f64) {
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

// ---------------------------------------------------------------------------
// Steady-state scaling scan
// ---------------------------------------------------------------------------

pub fn run_steady_scan(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    let (alpha, beta) = match spec.rf.kind() {
        crate::rate_fn::RateKind::Affine { alpha, beta } if *alpha > 0.0 && *beta > 0.0 => {
            (*alpha, *beta)
        }
        _ => {
            return Err(McError::SpecRejected(
                "steady-state scans need an affine rate with positive slope and intercept".into(),
            ))
        }
    };
    if spec.gamma != 0.0 {
        return Err(McError::SpecRejected(
            "steady-state scans assume gamma = 0".into(),
        ));
    }
    let horizon = *spec.horizons.last().unwrap();
    let (scale, scaling_label, predicted) = if (alpha - 1.0).abs() < 1e-9 {
        (horizon * horizon.ln(), "t*log(t)".to_string(), beta)
    } else if alpha < 1.0 {
        (horizon, "t".to_string(), beta / (1.0 - alpha))
    } else {
        (
            horizon.powf(alpha),
            format!("t^{alpha}"),
            beta / (alpha - 1.0),
        )
    };
    let counts = par_map_block(spec.master_seed, 0, spec.replications, |rng| {
        count_at(&spec.rf, spec.gamma, spec.max_events, rng, horizon).0
    });
    let normalized: Vec<f64> = counts.iter().map(|&n| n as f64 / scale).collect();
    let derived = Derived::SteadyScan {
        scaling_label,
        predicted,
        exact_normalized_mean: analytic::mean_affine(alpha, beta, horizon) / scale,
        normalized_mean: stats::mean(&normalized),
        normalized_mean_std_error: stats::std_error(&normalized),
    };
    let mut report = base_report(spec, derived);
    report.checkpoints = vec![summarize(format!("T={horizon}"), horizon, &normalized)];
    Ok(report)
}
