//! The five subcommands: config in, files out, flags back to `main` for the
//! exit code.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use sepp_core::analytic;
use sepp_core::ldp;
use sepp_core::mc::{self, Derived, ExperimentKind, McError};
use sepp_core::rate_fn::{RateKind, StabilityClass};
use sepp_core::sim;

use crate::config::{self, ConfigError, Issue};
use crate::output::{csv_f64, OutputDir};
use crate::{CommandError, CommonArgs};

type CommandResult = Result<Vec<String>, CommandError>;

fn load<T, F>(common: &CommonArgs, validate: F) -> Result<config::Loaded<T>, CommandError>
where
    T: for<'de> serde::Deserialize<'de>,
    F: Fn(&serde_json::Value, &mut Vec<Issue>),
{
    config::load(&common.config, &common.set, validate)
        .map_err(|e| CommandError::Config(e, common.errors_json))
}

fn open_out(common: &CommonArgs) -> Result<OutputDir, CommandError> {
    OutputDir::create(&common.out).map_err(CommandError::runtime)
}

fn reject(common: &CommonArgs, field: &str, message: String) -> CommandError {
    CommandError::Config(
        ConfigError::Invalid(vec![Issue {
            field: field.into(),
            message,
        }]),
        common.errors_json,
    )
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(common: &CommonArgs) -> CommandResult {
    let started = Instant::now();
    let loaded = load::<config::SimulateConfig, _>(common, config::SimulateConfig::validate)?;
    let cfg = loaded.config.to_sim_config();
    let trajectory = sim::simulate(&cfg).map_err(CommandError::runtime)?;

    let mut flags = Vec::new();
    if trajectory.exploded {
        flags.push(format!(
            "explosion_guard_tripped@t={}",
            trajectory.explosion_time.unwrap_or(f64::NAN)
        ));
    }
    if common.verbose > 0 {
        eprintln!(
            "simulated {} events on [0, {}] (exploded: {})",
            trajectory.jump_times.len(),
            trajectory.horizon,
            trajectory.exploded
        );
    }

    let mut out = open_out(common)?;
    let mut jsonl = serde_json::to_string(&trajectory).map_err(CommandError::runtime)?;
    jsonl.push('\n');
    out.write("events.jsonl", jsonl.as_bytes())
        .map_err(CommandError::runtime)?;

    let mut csv = String::from("seed,k,t_k\n");
    for (k, t) in trajectory.jump_times.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", trajectory.seed, k + 1, csv_f64(*t));
    }
    out.write("events.csv", csv.as_bytes())
        .map_err(CommandError::runtime)?;

    out.finish(
        "simulate",
        &common.config,
        &loaded.raw,
        &common.set,
        &flags,
        started.elapsed().as_secs_f64(),
    )
    .map_err(CommandError::runtime)?;
    Ok(flags)
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

pub fn analyze(common: &CommonArgs) -> CommandResult {
    let started = Instant::now();
    let loaded = load::<config::AnalyzeConfig, _>(common, config::AnalyzeConfig::validate)?;
    let cfg = &loaded.config;
    let mut out = open_out(common)?;
    let mut flags = Vec::new();

    match cfg.analysis {
        config::AnalysisKind::Moments => {
            let (alpha, beta) = match cfg.rate_fn.kind() {
                RateKind::Affine { alpha, beta } => (*alpha, *beta),
                RateKind::Constant { level } => (0.0, *level),
                _ => unreachable!("validated: affine or constant"),
            };
            let scaling = analytic::variance_scaling(alpha, beta);
            let mut csv = String::from("t,mean,var,var_scaled,scaling_label\n");
            for &t in &cfg.t_grid {
                let report = analytic::moment_report(alpha, beta, t);
                let norm = scaling.normalizer(t);
                let scaled = if norm > 0.0 {
                    report.variance / norm
                } else {
                    f64::NAN
                };
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    csv_f64(t),
                    csv_f64(report.mean),
                    csv_f64(report.variance),
                    csv_f64(scaled),
                    scaling.label()
                );
            }
            out.write("moments.csv", csv.as_bytes())
                .map_err(CommandError::runtime)?;
            out.write_json(
                "report.json",
                &json!({
                    "analysis": "moments",
                    "alpha": alpha,
                    "beta": beta,
                    "regime_scaling": scaling,
                    "growth": cfg.rate_fn.classify_growth(),
                }),
            )
            .map_err(CommandError::runtime)?;
        }
        config::AnalysisKind::Pmf => {
            let ladder = analytic::pmf_ladder(&cfg.rate_fn, cfg.gamma, cfg.t, cfg.k_max)
                .map_err(CommandError::runtime)?;
            if ladder.truncated_warning {
                flags.push(format!(
                    "truncation_mass_above_1pct={}",
                    ladder.truncation_mass
                ));
            }
            let mut csv = String::from("k,p_k\n");
            for (k, p) in ladder.probs.iter().enumerate() {
                let _ = writeln!(csv, "{},{}", k, csv_f64(*p));
            }
            out.write("pmf.csv", csv.as_bytes())
                .map_err(CommandError::runtime)?;
            out.write_json(
                "report.json",
                &json!({
                    "analysis": "pmf",
                    "t": ladder.t,
                    "gamma": ladder.gamma,
                    "k_max": cfg.k_max,
                    "truncation_mass": ladder.truncation_mass,
                    "truncated_warning": ladder.truncated_warning,
                    "void_check_gap": ladder.void_check_gap,
                    "growth": cfg.rate_fn.classify_growth(),
                }),
            )
            .map_err(CommandError::runtime)?;
        }
        config::AnalysisKind::Flow => {
            let curve = analytic::deterministic_flow(&cfg.rate_fn, cfg.y0, cfg.t_max)
                .map_err(CommandError::runtime)?;
            let mut csv = String::from("t,y\n");
            for &(t, y) in &curve.samples {
                let _ = writeln!(csv, "{},{}", csv_f64(t), csv_f64(y));
            }
            out.write("flow.csv", csv.as_bytes())
                .map_err(CommandError::runtime)?;
            let (t_end, y_end) = curve.terminal();
            out.write_json(
                "report.json",
                &json!({
                    "analysis": "flow",
                    "y0": cfg.y0,
                    "terminal_t": t_end,
                    "terminal_y": y_end,
                }),
            )
            .map_err(CommandError::runtime)?;
        }
    }

    out.finish(
        "analyze",
        &common.config,
        &loaded.raw,
        &common.set,
        &flags,
        started.elapsed().as_secs_f64(),
    )
    .map_err(CommandError::runtime)?;
    Ok(flags)
}

// ---------------------------------------------------------------------------
// ldp
// ---------------------------------------------------------------------------

pub fn ldp_scan(common: &CommonArgs) -> CommandResult {
    let started = Instant::now();
    let loaded = load::<config::LdpConfig, _>(common, config::LdpConfig::validate)?;
    let cfg = &loaded.config;
    let xs = cfg.xs();
    let results: Vec<(f64, ldp::RateValue)> = xs
        .par_iter()
        .map(|&x| {
            let rv = ldp::scalar_rate(&cfg.rate_fn, x, cfg.n_grid).map_err(|e| e.to_string())?;
            Ok((x, rv))
        })
        .collect::<Result<_, String>>()
        .map_err(CommandError::Runtime)?;

    let mut flags = Vec::new();
    let mut csv = String::from("x,rate,converged,n_grid\n");
    for (x, rv) in &results {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            csv_f64(*x),
            csv_f64(rv.value),
            rv.converged,
            cfg.n_grid
        );
        if !rv.converged {
            flags.push(format!("descent_iteration_cap@x={x}"));
        }
    }

    let mut out = open_out(common)?;
    out.write("rate.csv", csv.as_bytes())
        .map_err(CommandError::runtime)?;
    // Unbounded rates make the functional well-defined but the sample-path
    // theorem behind it assumes a bounded rate: labeled, not flagged.
    let formal = results.iter().any(|(_, rv)| rv.formal);
    out.write_json(
        "report.json",
        &json!({
            "n_grid": cfg.n_grid,
            "points": results.len(),
            "formal": formal,
            "growth": cfg.rate_fn.classify_growth(),
        }),
    )
    .map_err(CommandError::runtime)?;
    if cfg.emit_minimizers {
        let minimizers: Vec<_> = results
            .iter()
            .map(|(x, rv)| {
                let path = rv
                    .minimizer
                    .as_ref()
                    .expect("scalar rates carry minimizers");
                let pairs: Vec<(f64, f64)> = path
                    .grid()
                    .iter()
                    .cloned()
                    .zip(path.values().iter().cloned())
                    .collect();
                json!({ "x": x, "path": pairs })
            })
            .collect();
        out.write_json("minimizers.json", &minimizers)
            .map_err(CommandError::runtime)?;
    }
    out.finish(
        "ldp",
        &common.config,
        &loaded.raw,
        &common.set,
        &flags,
        started.elapsed().as_secs_f64(),
    )
    .map_err(CommandError::runtime)?;
    Ok(flags)
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

pub fn experiment(common: &CommonArgs) -> CommandResult {
    let started = Instant::now();
    let loaded = load::<config::ExperimentConfig, _>(common, config::ExperimentConfig::validate)?;
    let spec = loaded.config.to_spec();
    let report = mc::run(&spec).map_err(|e| match e {
        McError::SpecRejected(msg) | McError::InvalidSpec(msg) => reject(common, "experiment", msg),
        other => CommandError::runtime(other),
    })?;
    if common.verbose > 0 {
        eprintln!(
            "experiment {:?} finished in {:.2}s ({} replications)",
            report.kind, report.wall_time_secs, report.replications
        );
    }

    let mut out = open_out(common)?;
    out.write_json("report.json", &report)
        .map_err(CommandError::runtime)?;

    let mut csv = String::from("key,t,replications,mean,variance,std_error,q05,q25,q50,q75,q95\n");
    for cp in &report.checkpoints {
        let qs: Vec<String> = cp.quantiles.iter().map(|(_, v)| csv_f64(*v)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            cp.key,
            csv_f64(cp.t),
            cp.replications,
            csv_f64(cp.mean),
            csv_f64(cp.variance),
            csv_f64(cp.std_error),
            qs.join(",")
        );
    }
    out.write("checkpoints.csv", csv.as_bytes())
        .map_err(CommandError::runtime)?;

    if let Some(plot) = plot_extract(&report.derived, spec.kind, report.replications) {
        out.write("plot.csv", plot.as_bytes())
            .map_err(CommandError::runtime)?;
    }

    let flags = report.flags.clone();
    out.finish(
        "experiment",
        &common.config,
        &loaded.raw,
        &common.set,
        &flags,
        started.elapsed().as_secs_f64(),
    )
    .map_err(CommandError::runtime)?;
    Ok(flags)
}

/// Plot-ready `(x, y, y_lo, y_hi)` extract for figure-style experiments:
/// the attracted fraction against the horizon for LLN runs and the basin
/// frequencies against the initial condition.
fn plot_extract(derived: &Derived, kind: ExperimentKind, replications: u32) -> Option<String> {
    let mut csv = String::from("x,y,y_lo,y_hi\n");
    match (kind, derived) {
        (ExperimentKind::Lln, Derived::Lln { per_horizon, .. }) => {
            for h in per_horizon {
                let attracted: f64 = h.near_stable.iter().map(|(_, f)| f).sum();
                let se = (attracted * (1.0 - attracted) / replications as f64).sqrt();
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    csv_f64(h.t),
                    csv_f64(attracted),
                    csv_f64((attracted - 1.96 * se).max(0.0)),
                    csv_f64((attracted + 1.96 * se).min(1.0)),
                );
            }
            Some(csv)
        }
        (ExperimentKind::Basin, Derived::Basin { per_gamma, .. }) => {
            for b in per_gamma {
                let p1 = b.p_hat[0];
                let se = b.p_hat_std_error[0];
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    csv_f64(b.gamma),
                    csv_f64(p1),
                    csv_f64((p1 - 1.96 * se).max(0.0)),
                    csv_f64((p1 + 1.96 * se).min(1.0)),
                );
            }
            Some(csv)
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// fixed-points
// ---------------------------------------------------------------------------

pub fn fixed_points(common: &CommonArgs) -> CommandResult {
    let started = Instant::now();
    let loaded = load::<config::FixedPointsConfig, _>(common, config::FixedPointsConfig::validate)?;
    let cfg = &loaded.config;
    let hi = cfg
        .search_hi
        .unwrap_or_else(|| cfg.rate_fn.default_search_hi());
    let report = cfg
        .rate_fn
        .find_fixed_points(hi)
        .map_err(CommandError::runtime)?;

    println!("{:<20} {:<12} class", "location", "slope");
    for p in &report.points {
        let class = match p.class {
            StabilityClass::Stable => "stable".to_string(),
            StabilityClass::Unstable => "unstable".to_string(),
            StabilityClass::SaddleLeftStable => "saddle_left_stable".to_string(),
            StabilityClass::SaddleRightStable => "saddle_right_stable".to_string(),
            StabilityClass::Interval { lo, hi } => {
                format!("interval[{}, {}]", csv_f64(lo), csv_f64(hi))
            }
        };
        println!(
            "{:<20} {:<12} {class}",
            csv_f64(p.location),
            csv_f64(p.slope)
        );
    }
    if !report.complete {
        println!("(search interval does not provably bracket all solutions)");
    }

    let mut flags = Vec::new();
    if !report.complete {
        flags.push(format!("search_not_provably_complete@search_hi={hi}"));
    }
    let mut out = open_out(common)?;
    out.write_json(
        "fixed_points.json",
        &json!({ "search_hi": hi, "report": report }),
    )
    .map_err(CommandError::runtime)?;
    out.finish(
        "fixed-points",
        &common.config,
        &loaded.raw,
        &common.set,
        &flags,
        started.elapsed().as_secs_f64(),
    )
    .map_err(CommandError::runtime)?;
    Ok(flags)
}
