//! Declarative, reproducible, parallel Monte Carlo experiments that check
//! the process's limit theorems at desk scale: law of large numbers, central
//! limit theorem, gamma scaling limit, basin probabilities, L² convergence
//! rates, fluid limits, exact tail laws, explosion fractions, and the
//! steady-state scalings of affine rates.
//!
//! # Reproducibility contract
//!
//! Replication `i` draws from the ChaCha stream `i` of the master seed
//! (counter-based derivation: no two replications share a stream), results
//! are collected in replication order, and all reductions are deterministic
//! functions of that ordered collection (pairwise summation for moments), so
//! a report is a pure function of its [`ExperimentSpec`] regardless of worker
//! count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytic::{AnalyticError, TailLaw};
use crate::rate_fn::RateFunction;
use crate::sim::{SimError, DEFAULT_MAX_EVENTS};

mod runs;

#[derive(Debug, Error)]
pub enum McError {
    #[error("experiment spec rejected: {0}")]
    SpecRejected(String),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("analytic error: {0}")]
    Analytic(#[from] AnalyticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lln,
    Clt,
    GammaLimit,
    Basin,
    L2Rate,
    FluidLimit,
    Tail,
    Explosion,
    SteadyScan,
}

/// Kind-specific knobs; absent fields fall back to per-kind defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    /// LLN: attraction tolerance around each fixed point (default 0.1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Tail: thresholds ℓ at which the tail is evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell_grid: Option<Vec<u64>>,
    /// Tail: ladder truncation depth (default `max ℓ + 80`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// L2Rate: checkpoint times (default 13 points log-spaced on [10, T]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    /// Basin: cap on the attribution half-gap radius (default 0.25).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribution_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub rf: RateFunction,
    /// Initial condition; enters the intensity argument as `(N_{t-}+γ)/(t+1)`.
    #[serde(default)]
    pub gamma: f64,
    /// Basin / fluid-limit sweeps use a grid instead of `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    /// Sorted positive horizons; kinds that need one horizon use the last.
    pub horizons: Vec<f64>,
    pub replications: u32,
    pub master_seed: u64,
    /// Explosion guard per replication.
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub params: ExperimentParams,
}

fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), McError> {
        if self.replications == 0 {
            return Err(McError::InvalidSpec("replications must be >= 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(McError::InvalidSpec(
                "at least one horizon is required".into(),
            ));
        }
        if self.horizons.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(McError::InvalidSpec(
                "horizons must be positive and finite".into(),
            ));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(McError::InvalidSpec(
                "horizons must be strictly increasing".into(),
            ));
        }
        if !(self.gamma >= 0.0) {
            return Err(McError::InvalidSpec(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if let Some(grid) = &self.gamma_grid {
            if grid.is_empty() || grid.iter().any(|&g| !(g >= 0.0)) {
                return Err(McError::InvalidSpec(
                    "gamma_grid must be nonempty, all >= 0".into(),
                ));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(McError::InvalidSpec(
                    "gamma_grid must be strictly increasing".into(),
                ));
            }
        }
        if self.max_events == 0 {
            return Err(McError::InvalidSpec("max_events must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding; identifies the run in reports.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Summary statistics of the per-replication statistic at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    /// What this row aggregates, e.g. `T=10000` or `gamma=3;T=10000`.
    pub key: String,
    pub t: f64,
    pub replications: u32,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// `(q, value)` at q ∈ {0.05, 0.25, 0.5, 0.75, 0.95}.
    pub quantiles: Vec<(f64, f64)>,
}

pub(crate) const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Per-horizon LLN attraction accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnHorizon {
    pub t: f64,
    /// `(stable point, fraction of runs with |N_T/T − x*| < tolerance)`.
    pub near_stable: Vec<(f64, f64)>,
    /// Fraction within tolerance of any unstable point.
    pub near_unstable: f64,
    /// Fraction attracted to no fixed point at this tolerance.
    pub elsewhere: f64,
}

/// Per-γ basin attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinPoint {
    pub gamma: f64,
    /// Attribution frequency per stable fixed point, ascending by location.
    pub p_hat: Vec<f64>,
    pub p_hat_std_error: Vec<f64>,
    pub unresolved: f64,
}

/// Per-γ fluid-limit deviation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidPoint {
    pub gamma: f64,
    /// Normalizer γ^β (γ itself for asymptotically linear rates).
    pub normalizer: f64,
    pub median_sup_deviation: f64,
    pub q95_sup_deviation: f64,
}

/// One tail evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub ell: u64,
    pub log_sf: f64,
    /// `(1/ℓ)·log P` for exponential laws, `(1/(ℓ log ℓ))·log P` otherwise.
    pub normalized: f64,
}

/// Kind-specific derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Derived {
    Lln {
        tolerance: f64,
        per_horizon: Vec<LlnHorizon>,
    },
    Clt {
        predicted_variance: f64,
        sample_variance: f64,
        sample_variance_std_error: f64,
        /// Exact finite-horizon mean shift of the normalized statistic,
        /// `(E[N_T] − βT/(1−α))/√T`; removed before the KS comparison.
        mean_bias: f64,
        /// KS distance of the bias-corrected statistic to the Gaussian limit.
        ks_distance: f64,
        ks_distance_uncorrected: f64,
    },
    GammaLimit {
        shape: f64,
        ks_distance: f64,
        mean: f64,
        mean_std_error: f64,
        variance: f64,
    },
    Basin {
        stable_points: Vec<f64>,
        attribution_tolerances: Vec<f64>,
        per_gamma: Vec<BasinPoint>,
        /// Unresolved fraction pooled over the whole γ-grid.
        unresolved_overall: f64,
        /// Max violation of nonincreasing p̂₁ against its isotonic fit, in
        /// per-point standard errors.
        monotonicity_violation_se: f64,
    },
    L2Rate {
        /// `(t, m̂(t), standard error)` per checkpoint.
        points: Vec<(f64, f64, f64)>,
        /// Log–log slope fitted on the upper decade (power regimes).
        fitted_slope: Option<f64>,
        predicted_slope: Option<f64>,
        /// α = 1/2: `m̂(t)·t/log t` ratios to the largest-t value.
        log_model_ratios: Option<Vec<f64>>,
    },
    FluidLimit {
        per_gamma: Vec<FluidPoint>,
    },
    Tail {
        law: TailLaw,
        /// Limit of the normalized log-tail predicted by the law.
        predicted: f64,
        points: Vec<TailPoint>,
    },
    Explosion {
        exploded: u32,
        fraction: f64,
        /// Wilson score interval at 99%.
        ci99: (f64, f64),
        /// `exp(−∫₀^T λ(γ/(s+1))ds)`: void runs never explode.
        void_lower_bound: f64,
    },
    SteadyScan {
        scaling_label: String,
        predicted: f64,
        /// Exact `E[N_T]/s(T)` (carries the finite-horizon bias).
        exact_normalized_mean: f64,
        normalized_mean: f64,
        normalized_mean_std_error: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub spec_hash: String,
    pub master_seed: u64,
    pub replications: u32,
    /// Completed-with-caveats markers (drive the CLI's exit code 3).
    pub flags: Vec<String>,
    pub checkpoints: Vec<CheckpointSummary>,
    pub derived: Derived,
    /// Wall time is run metadata, not payload: reports must be byte-identical
    /// across repeated runs, so this field stays out of the serialization
    /// (the CLI records it in the run manifest instead).
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// The RNG stream for one replication: counter-based derivation from the
/// master seed, so streams never overlap and any subset can be regenerated.
pub fn replication_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Ordered parallel map over replication streams `block·reps .. block·reps+reps`;
/// the output order is by replication index, independent of scheduling.
pub(crate) fn par_map_block<T: Send>(
    master_seed: u64,
    block: u64,
    replications: u32,
    f: impl Fn(&mut ChaCha8Rng) -> T + Sync,
) -> Vec<T> {
    (0..replications as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(master_seed, block * replications as u64 + i);
            f(&mut rng)
        })
        .collect()
}

pub(crate) fn summarize(key: String, t: f64, xs: &[f64]) -> CheckpointSummary {
    use crate::numerics::stats;
    let qs = stats::quantiles(xs, &QUANTILES);
    CheckpointSummary {
        key,
        t,
        replications: xs.len() as u32,
        mean: stats::mean(xs),
        variance: stats::sample_variance(xs),
        std_error: stats::std_error(xs),
        quantiles: QUANTILES.iter().cloned().zip(qs).collect(),
    }
}

/// Runs the experiment described by the spec.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport, McError> {
    spec.validate()?;
    let started = std::time::Instant::now();
    let mut report = match spec.kind {
        ExperimentKind::Lln => runs::run_lln(spec),
        ExperimentKind::Clt => runs::run_clt(spec),
        ExperimentKind::GammaLimit => runs::run_gamma_limit(spec),
        ExperimentKind::Basin => runs::run_basin(spec),
        ExperimentKind::L2Rate => runs::run_l2_rate(spec),
        ExperimentKind::FluidLimit => runs::run_fluid_limit(spec),
        ExperimentKind::Tail => runs::run_tail(spec),
        ExperimentKind::Explosion => runs::run_explosion(spec),
        ExperimentKind::SteadyScan => runs::run_steady_scan(spec),
    }?;
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

pub use runs::{
    run_basin, run_clt, run_explosion, run_fluid_limit, run_gamma_limit, run_l2_rate, run_lln,
    run_steady_scan, run_tail, sample_counts, tv_distance_to_exact_law,
};

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_lln_spec() -> ExperimentSpec {
        ExperimentSpec {
            kind: ExperimentKind::Lln,
            rf: RateFunction::sqrt_shift(),
            gamma: 1.0,
            gamma_grid: None,
            horizons: vec![50.0],
            replications: 16,
            master_seed: 7,
            max_events: 100_000,
            params: ExperimentParams::default(),
        }
    }

    #[test]
    fn spec_validation_catches_bad_fields() {
        let mut s = tiny_lln_spec();
        s.replications = 0;
        assert!(matches!(s.validate(), Err(McError::InvalidSpec(_))));
        let mut s = tiny_lln_spec();
        s.horizons = vec![2.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = tiny_lln_spec();
        s.gamma = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_hash_is_stable_and_sensitive() {
        let a = tiny_lln_spec();
        let b = tiny_lln_spec();
        assert_eq!(a.hash(), b.hash());
        let mut c = tiny_lln_spec();
        c.master_seed += 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn replication_streams_do_not_collide() {
        use rand::Rng;
        let draws = |stream: u64| -> Vec<u64> {
            let mut rng = replication_rng(42, stream);
            (0..1000).map(|_| rng.random::<u64>()).collect()
        };
        let sample: Vec<Vec<u64>> = (0..50).map(draws).collect();
        for i in 0..sample.len() {
            for j in (i + 1)..sample.len() {
                assert_ne!(sample[i], sample[j], "streams {i} and {j} coincide");
                let positional_collisions = sample[i]
                    .iter()
                    .zip(&sample[j])
                    .filter(|(a, b)| a == b)
                    .count();
                assert!(
                    positional_collisions <= 2,
                    "streams {i},{j} look correlated"
                );
            }
        }
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let spec = tiny_lln_spec();
        let mut payloads = Vec::new();
        for workers in [1usize, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let report = pool.install(|| run(&spec).unwrap());
            payloads.push(serde_json::to_string(&report).unwrap());
        }
        assert_eq!(payloads[0], payloads[1]);
        assert_eq!(payloads[1], payloads[2]);
    }

    #[test]
    fn wall_time_stays_out_of_the_payload() {
        let report = run(&tiny_lln_spec()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("wall_time"));
        assert!(report.wall_time_secs >= 0.0);
    }
}
