//! Closed-form and ODE-based exact quantities for the process: moments and
//! covariances of `N_t` for affine rates in every slope regime, the
//! negative-binomial marginal law of the pure linear-with-offset case, the
//! Kolmogorov forward pmf ladder for general rates, tail asymptotes, and the
//! deterministic mean-field flow.
//!
//! Removable singularities of the affine formulas at slope 1/2 and 1 are
//! handled by explicit branches with a small switch window around each seam.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::numerics::ode::{self, OdeError, OdeOptions};
use crate::numerics::quad;
use crate::numerics::stats::log_sum_exp;
use crate::rate_fn::{GrowthClass, RateFnError, RateFunction};

/// Window around the removable singularities `α = 1/2` and `α = 1` inside
/// which the special-case branches are used.
pub const BRANCH_WINDOW: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rate function error: {0}")]
    RateFn(#[from] RateFnError),
    #[error("ode error: {0}")]
    Ode(#[from] OdeError),
}

// ---------------------------------------------------------------------------
// Moments for λ(z) = β + αz started from N_0 = 0, γ = 0.
// ---------------------------------------------------------------------------

/// `E[N_t] = (t+1)·β/(1−α)·[1 − (t+1)^{α−1}]`, with the `β(t+1)log(t+1)`
/// branch at `α = 1`.
pub fn mean_affine(alpha: f64, beta: f64, t: f64) -> f64 {
    debug_assert!(alpha >= 0.0 && beta >= 0.0 && t >= 0.0);
    let tp = t + 1.0;
    if (alpha - 1.0).abs() < BRANCH_WINDOW {
        beta * tp * tp.ln()
    } else {
        tp * beta / (1.0 - alpha) * (1.0 - tp.powf(alpha - 1.0))
    }
}

/// How `Var[N_t]` scales as `t → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalingLaw {
    /// `Var[N_t] ~ constant · t^exponent`.
    PowerOfT { exponent: f64, constant: f64 },
    /// `Var[N_t] ~ constant · t·log t`.
    TLogT { constant: f64 },
}

impl ScalingLaw {
    /// Normalizer `s(t)` for the law, `Var[N_t]/s(t) → constant`.
    pub fn normalizer(&self, t: f64) -> f64 {
        match self {
            ScalingLaw::PowerOfT { exponent, .. } => t.powf(*exponent),
            ScalingLaw::TLogT { .. } => t * t.ln(),
        }
    }

    pub fn constant(&self) -> f64 {
        match self {
            ScalingLaw::PowerOfT { constant, .. } => *constant,
            ScalingLaw::TLogT { constant } => *constant,
        }
    }

    /// Stable column label for report tables.
    pub fn label(&self) -> String {
        match self {
            ScalingLaw::PowerOfT { exponent, .. } => format!("t^{exponent}"),
            ScalingLaw::TLogT { .. } => "t*log(t)".to_string(),
        }
    }
}

/// The limiting variance scaling for `λ(z) = β + αz`.
pub fn variance_scaling(alpha: f64, beta: f64) -> ScalingLaw {
    if (alpha - 0.5).abs() < BRANCH_WINDOW {
        ScalingLaw::TLogT {
            constant: 2.0 * beta,
        }
    } else if (alpha - 1.0).abs() < BRANCH_WINDOW {
        ScalingLaw::PowerOfT {
            exponent: 2.0,
            constant: 2.0 * beta,
        }
    } else if alpha < 0.5 {
        ScalingLaw::PowerOfT {
            exponent: 1.0,
            constant: beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha)),
        }
    } else {
        ScalingLaw::PowerOfT {
            exponent: 2.0 * alpha,
            constant: 2.0 * beta / (2.0 * alpha - 1.0),
        }
    }
}

/// Exact `Var[N_t]` for `λ(z) = β + αz`, three-way branch on `α`.
pub fn variance_affine(alpha: f64, beta: f64, t: f64) -> f64 {
    debug_assert!(alpha >= 0.0 && beta >= 0.0 && t >= 0.0);
    let tp = t + 1.0;
    if (alpha - 0.5).abs() < BRANCH_WINDOW {
        tp * tp * (2.0 * beta * (tp.ln() - 1.0) / tp + 2.0 * beta / tp.powf(1.5))
    } else if (alpha - 1.0).abs() < BRANCH_WINDOW {
        -beta * tp * tp.ln() + 2.0 * beta * t * tp
    } else {
        tp * tp
            * (beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha)) / tp
                + beta / (1.0 - alpha) / tp.powf(2.0 - alpha)
                + (-2.0 * beta / (1.0 - 2.0 * alpha)) / tp.powf(2.0 * (1.0 - alpha)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub regime_scaling: ScalingLaw,
}

pub fn moment_report(alpha: f64, beta: f64, t: f64) -> MomentReport {
    MomentReport {
        t,
        mean: mean_affine(alpha, beta, t),
        variance: variance_affine(alpha, beta, t),
        regime_scaling: variance_scaling(alpha, beta),
    }
}

/// Exact `Cov[N_t, N_s]` for `λ(z) = β + αz` and `t > s ≥ 0`.
pub fn covariance_affine(alpha: f64, beta: f64, t: f64, s: f64) -> Result<f64, AnalyticError> {
    if !(t > s && s >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "covariance requires t > s >= 0, got t={t}, s={s} (swap arguments: Cov is symmetric)"
        )));
    }
    let tp = t + 1.0;
    let sp = s + 1.0;
    if (alpha - 0.5).abs() < BRANCH_WINDOW {
        Ok(2.0 * beta * (-tp.sqrt() * sp.sqrt() + tp.sqrt() + tp.sqrt() * sp.sqrt() * sp.ln()))
    } else if (alpha - 1.0).abs() < BRANCH_WINDOW {
        Ok(-beta * tp * sp.ln() + 2.0 * beta * s * tp)
    } else {
        Ok(tp.powf(alpha)
            * (beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha)) * sp.powf(1.0 - alpha)
                + beta / (1.0 - alpha)
                - 2.0 * beta / (1.0 - 2.0 * alpha) * sp.powf(alpha)))
    }
}

// ---------------------------------------------------------------------------
// Pure linear rate with offset: λ_t = α(N_{t-}+γ)/(t+1).
// ---------------------------------------------------------------------------

/// `(E[N_t], Var[N_t])` for the linear rate with offset `γ`:
/// mean `γ[(t+1)^α − 1]`, variance `γ[(t+1)^{2α} − (t+1)^α]`.
pub fn linear_gamma_stats(alpha: f64, gamma: f64, t: f64) -> (f64, f64) {
    debug_assert!(alpha > 0.0 && gamma > 0.0 && t >= 0.0);
    let p = (t + 1.0).powf(alpha);
    (gamma * (p - 1.0), gamma * (p * p - p))
}

/// `Cov[N_t, N_s]` for the linear rate with offset, `t > s`.
pub fn linear_gamma_covariance(
    alpha: f64,
    gamma: f64,
    t: f64,
    s: f64,
) -> Result<f64, AnalyticError> {
    if !(t > s && s >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "covariance requires t > s >= 0, got t={t}, s={s}"
        )));
    }
    let pt = (t + 1.0).powf(alpha);
    let ps = (s + 1.0).powf(alpha);
    Ok((ps - 1.0) * (gamma * pt + (gamma - gamma * gamma) * (pt / ps - 1.0)))
}

/// Log of the generalized binomial coefficient `C(k+γ−1, k) = Γ(k+γ)/(Γ(γ)·k!)`.
fn ln_generalized_binomial(k: u64, gamma: f64) -> f64 {
    ln_gamma(k as f64 + gamma) - ln_gamma(gamma) - ln_gamma(k as f64 + 1.0)
}

/// `log P(N_t = k)` for the linear-with-offset rate: the negative-binomial
/// law with success parameter `(t+1)^{−α}` and size `γ` (log-gamma form, so
/// non-integer `γ` and far tails are exact to rounding).
pub fn negbin_log_pmf(alpha: f64, gamma: f64, t: f64, k: u64) -> f64 {
    debug_assert!(alpha > 0.0 && gamma > 0.0 && t >= 0.0);
    let ln_p = -alpha * (t + 1.0).ln(); // log (t+1)^{-α}
    let one_minus_p = -ln_p.exp_m1(); // 1 − (t+1)^{-α}
    if k == 0 {
        return gamma * ln_p;
    }
    if one_minus_p <= 0.0 {
        return f64::NEG_INFINITY; // t = 0: all mass at k = 0
    }
    ln_generalized_binomial(k, gamma) + k as f64 * one_minus_p.ln() + gamma * ln_p
}

/// `P(N_t = k)` for the linear-with-offset rate.
pub fn negbin_pmf(alpha: f64, gamma: f64, t: f64, k: u64) -> f64 {
    negbin_log_pmf(alpha, gamma, t, k).exp()
}

/// `log P(N_t ≥ ell)`: log-space tail sum of [`negbin_log_pmf`], summed until
/// the remainder is negligible.
pub fn negbin_log_sf(alpha: f64, gamma: f64, t: f64, ell: u64) -> f64 {
    let mut terms = Vec::new();
    let mut k = ell;
    let mut best = f64::NEG_INFINITY;
    loop {
        let lp = negbin_log_pmf(alpha, gamma, t, k);
        terms.push(lp);
        best = best.max(lp);
        // Terms decay geometrically once past the mode; stop when negligible.
        if lp < best - 45.0 || terms.len() > 500_000 {
            break;
        }
        k += 1;
    }
    log_sum_exp(&terms)
}

/// `P(N_t = k+m | N_s = m)` for the linear-with-offset rate (`t > s ≥ 0`):
/// negative binomial with success parameter `((s+1)/(t+1))^α`, size `γ+m`.
pub fn negbin_conditional_pmf(
    alpha: f64,
    gamma: f64,
    t: f64,
    s: f64,
    m: u64,
    k: u64,
) -> Result<f64, AnalyticError> {
    if !(t > s && s >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "conditional law requires t > s >= 0, got t={t}, s={s}"
        )));
    }
    let ln_q = alpha * ((s + 1.0) / (t + 1.0)).ln();
    let size = gamma + m as f64;
    if k == 0 {
        return Ok((size * ln_q).exp());
    }
    let one_minus_q = -ln_q.exp_m1();
    if one_minus_q <= 0.0 {
        return Ok(0.0);
    }
    Ok((ln_generalized_binomial(k, size) + k as f64 * one_minus_q.ln() + size * ln_q).exp())
}

// ---------------------------------------------------------------------------
// Kolmogorov forward pmf ladder for general rates.
// ---------------------------------------------------------------------------

/// Truncation-mass threshold above which a ladder result carries a warning.
pub const LADDER_TRUNCATION_WARN: f64 = 0.01;

/// `P(N_t = k)` for `k = 0..=k_max` from the forward system
/// `dp_k/dt = λ((γ+k−1)/(t+1))·p_{k−1} − λ((γ+k)/(t+1))·p_k`, `p_0(0) = 1`.
///
/// The system is lower triangular, so the reported probabilities are exact
/// (to integrator tolerance) regardless of the truncation index; the
/// truncation only limits how much of the distribution is visible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfLadder {
    pub t: f64,
    pub gamma: f64,
    pub probs: Vec<f64>,
    /// `1 − Σ p_k`: probability mass beyond `k_max`.
    pub truncation_mass: f64,
    /// Set when `truncation_mass` exceeds [`LADDER_TRUNCATION_WARN`].
    pub truncated_warning: bool,
    /// `|p_0(ladder) − exp(−∫₀ᵗ λ(γ/(s+1))ds)|`: void-probability cross-check.
    pub void_check_gap: f64,
}

pub fn pmf_ladder(
    rf: &RateFunction,
    gamma: f64,
    t: f64,
    k_max: usize,
) -> Result<PmfLadder, AnalyticError> {
    if !(gamma >= 0.0) || !(t >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "pmf ladder requires gamma >= 0 and t >= 0, got gamma={gamma}, t={t}"
        )));
    }
    let mut y0 = vec![0.0; k_max + 1];
    y0[0] = 1.0;
    // Tighter than strictly needed per step: the lower-triangular chain
    // accumulates local error across levels and time, and downstream checks
    // compare against closed forms at 1e-9.
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        max_steps: 5_000_000,
    };
    let rhs = |time: f64, p: &[f64], dp: &mut [f64]| {
        let denom = time + 1.0;
        let mut lam_prev = rf.value(gamma / denom);
        dp[0] = -lam_prev * p[0];
        for k in 1..=k_max {
            let lam_k = rf.value((gamma + k as f64) / denom);
            dp[k] = lam_prev * p[k - 1] - lam_k * p[k];
            lam_prev = lam_k;
        }
    };
    let probs = if t == 0.0 {
        y0
    } else {
        ode::integrate_checkpoints(rhs, 0.0, &y0, &[t], &opts)?
            .pop()
            .unwrap()
    };
    // Tiny negatives are integrator noise around zero-mass states.
    let probs: Vec<f64> = probs
        .into_iter()
        .map(|p| if p > -1e-9 { p.max(0.0) } else { p })
        .collect();
    if let Some(bad) = probs.iter().find(|&&p| p < 0.0) {
        return Err(AnalyticError::Domain(format!(
            "ladder produced negative probability {bad}"
        )));
    }
    let total: f64 = probs.iter().sum();
    let truncation_mass = 1.0 - total;
    let void = void_probability(rf, gamma, t)?;
    Ok(PmfLadder {
        t,
        gamma,
        void_check_gap: (probs[0] - void).abs(),
        truncated_warning: truncation_mass > LADDER_TRUNCATION_WARN,
        truncation_mass,
        probs,
    })
}

/// `P(N_t = 0) = exp(−∫₀ᵗ λ(γ/(s+1))ds)` by adaptive Gauss–Kronrod.
pub fn void_probability(rf: &RateFunction, gamma: f64, t: f64) -> Result<f64, AnalyticError> {
    if !(gamma >= 0.0) || !(t >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "void probability requires gamma >= 0 and t >= 0, got gamma={gamma}, t={t}"
        )));
    }
    let integral = quad::integrate(|s| rf.value(gamma / (s + 1.0)), 0.0, t, 1e-12);
    Ok((-integral).exp())
}

/// `log P(N_t = k)` for `k = 0..=k_max` by the same forward ladder in log
/// space, so far-tail probabilities (down to `e^{-700}` and beyond) keep full
/// relative accuracy. Requires `t > 0`.
pub fn log_pmf_ladder(
    rf: &RateFunction,
    gamma: f64,
    t: f64,
    k_max: usize,
) -> Result<Vec<f64>, AnalyticError> {
    if !(gamma >= 0.0) || !(t > 0.0) {
        return Err(AnalyticError::Domain(format!(
            "log pmf ladder requires gamma >= 0 and t > 0, got gamma={gamma}, t={t}"
        )));
    }
    // Series start at a tiny t0: p_k(t0) ≈ t0^k/k! · Π_{j<k} λ(γ+j).
    let t0 = 1e-8 * t.min(1.0);
    let mut l0 = vec![0.0; k_max + 1];
    l0[0] = -rf.value(gamma) * t0;
    let mut acc = 0.0;
    let mut reachable = k_max;
    #[allow(clippy::needless_range_loop)] // k mirrors the level recurrence
    for k in 1..=k_max {
        let lam = rf.value(gamma + (k - 1) as f64);
        if lam <= 0.0 {
            reachable = k - 1;
            break;
        }
        acc += lam.ln();
        l0[k] = acc + k as f64 * t0.ln() - ln_gamma(k as f64 + 1.0);
    }
    if reachable < k_max {
        return Err(AnalyticError::Domain(
            "log ladder is undefined when λ vanishes on a reachable level".into(),
        ));
    }
    // Absolute tolerance on log p == relative tolerance on p.
    let opts = OdeOptions {
        rtol: 0.0,
        atol: 1e-8,
        max_steps: 20_000_000,
    };
    let rhs = |time: f64, l: &[f64], dl: &mut [f64]| {
        let denom = time + 1.0;
        let mut lam_prev = rf.value(gamma / denom);
        dl[0] = -lam_prev;
        for k in 1..=k_max {
            let lam_k = rf.value((gamma + k as f64) / denom);
            // Cap the exponent: trial steps can wildly overshoot.
            dl[k] = lam_prev * (l[k - 1] - l[k]).min(700.0).exp() - lam_k;
            lam_prev = lam_k;
        }
    };
    Ok(ode::integrate_checkpoints(rhs, t0, &l0, &[t], &opts)?
        .pop()
        .unwrap())
}

/// `log P(N_t ≥ ell)` from a log-space ladder result.
pub fn log_tail_from_ladder(log_probs: &[f64], ell: usize) -> f64 {
    log_sum_exp(&log_probs[ell.min(log_probs.len())..])
}

// ---------------------------------------------------------------------------
// Tail asymptotes.
// ---------------------------------------------------------------------------

/// Predicted large-`ℓ` law of `P(N_t ≥ ℓ)` for fixed `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tail", rename_all = "snake_case")]
pub enum TailLaw {
    /// `(1/ℓ)·log P(N_t ≥ ℓ) → −rate`, with `rate = −log(1 − (t+1)^{−α})`.
    Exponential { rate: f64 },
    /// `(1/(ℓ·log ℓ))·log P(N_t ≥ ℓ) → coefficient` (= −(1−β); −1 for
    /// bounded rates).
    PoissonType { coefficient: f64 },
    /// Superlinear rates: the tail does not vanish (positive explosion mass).
    NoDecay,
}

pub fn tail_asymptote(rf: &RateFunction, t: f64) -> Result<TailLaw, AnalyticError> {
    if !(t > 0.0) {
        return Err(AnalyticError::Domain(format!(
            "tail law requires t > 0, got {t}"
        )));
    }
    Ok(match rf.classify_growth() {
        GrowthClass::AsymptoticallyLinear { alpha_lim } => {
            let ln_p = -alpha_lim * (t + 1.0).ln();
            TailLaw::Exponential {
                rate: -(-ln_p.exp_m1()).ln(),
            }
        }
        GrowthClass::Sublinear { beta_exp, .. } => TailLaw::PoissonType {
            coefficient: -(1.0 - beta_exp),
        },
        GrowthClass::Bounded { .. } => TailLaw::PoissonType { coefficient: -1.0 },
        GrowthClass::Superlinear { .. } => TailLaw::NoDecay,
    })
}

// ---------------------------------------------------------------------------
// Deterministic mean-field flow.
// ---------------------------------------------------------------------------

/// Sampled deterministic flow `Ȳ_t` of `dȲ = (λ(Ȳ) − Ȳ)/(t+1)·dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowCurve {
    pub samples: Vec<(f64, f64)>,
}

impl FlowCurve {
    pub fn terminal(&self) -> (f64, f64) {
        *self.samples.last().unwrap()
    }
}

/// Flow values at the given times (nondecreasing, ≥ 0). Integrated in
/// `u = log(1+t)`, which makes the system autonomous (`dȲ/du = λ(Ȳ) − Ȳ`)
/// and removes the `1/(t+1)` stiffness at large `t`; the time change is
/// exact, not an approximation.
pub fn flow_at_times(rf: &RateFunction, y0: f64, times: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    if !(y0 >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "flow requires y0 >= 0, got {y0}"
        )));
    }
    let checkpoints: Vec<f64> = times.iter().map(|&t| (1.0 + t).ln()).collect();
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        max_steps: 5_000_000,
    };
    let rhs = |_u: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = rf.value(y[0].max(0.0)) - y[0];
    };
    let states = ode::integrate_checkpoints(rhs, 0.0, &[y0], &checkpoints, &opts)?;
    Ok(states.into_iter().map(|s| s[0]).collect())
}

/// The flow sampled on a geometric time grid up to `t_max`.
pub fn deterministic_flow(
    rf: &RateFunction,
    y0: f64,
    t_max: f64,
) -> Result<FlowCurve, AnalyticError> {
    if !(t_max > 0.0) {
        return Err(AnalyticError::Domain(format!(
            "flow requires t_max > 0, got {t_max}"
        )));
    }
    let n = 256usize;
    let u_max = (1.0 + t_max).ln();
    let times: Vec<f64> = (1..=n)
        .map(|i| (u_max * i as f64 / n as f64).exp() - 1.0)
        .collect();
    let values = flow_at_times(rf, y0, &times)?;
    let mut samples = vec![(0.0, y0)];
    samples.extend(times.into_iter().zip(values));
    Ok(FlowCurve { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_fn::StabilityClass;

    const E: f64 = std::f64::consts::E;
    const LN_2: f64 = std::f64::consts::LN_2;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn mean_affine_known_values() {
        // (t+1)·β/(1−α)·(1−(t+1)^{α−1}) at α=0.5, β=1, t=3: 4·2·(1−1/2) = 4.
        assert!((mean_affine(0.5, 1.0, 3.0) - 4.0).abs() < 1e-12);
        // Log branch: α=1, β=2, t=e−1 → 2e.
        assert!((mean_affine(1.0, 2.0, E - 1.0) - 2.0 * E).abs() < 1e-12);
        assert_eq!(mean_affine(0.7, 0.0, 5.0), 0.0);
    }

    #[test]
    fn mean_affine_continuous_across_alpha_one() {
        for t in [1.0, 10.0, 1e4] {
            let log_branch = mean_affine(1.0, 1.0, t);
            for da in [-1e-7, 1e-7] {
                let alpha = 1.0 + da;
                let generic = (t + 1.0) / (1.0 - alpha) * (1.0 - (t + 1.0).powf(alpha - 1.0));
                assert!(
                    rel_err(generic, log_branch) < 1e-6,
                    "t={t}, da={da}: {generic} vs {log_branch}"
                );
            }
        }
    }

    #[test]
    fn variance_affine_known_values() {
        // α=1/2, β=1, t=e−1 → 2√e.
        assert!(rel_err(variance_affine(0.5, 1.0, E - 1.0), 2.0 * E.sqrt()) < 1e-12);
        // α=1, β=1, t=1 → 4 − 2 log 2.
        assert!(rel_err(variance_affine(1.0, 1.0, 1.0), 4.0 - 2.0 * LN_2) < 1e-12);
        // α=0 is Poisson: Var = βt.
        assert!(rel_err(variance_affine(0.0, 2.0, 7.0), 14.0) < 1e-12);
    }

    #[test]
    fn variance_regime_limits() {
        // Var/t → β/((1−2α)(1−α)) for α < 1/2 within 1%. The slowest
        // correction term scales as (t+1)^{2α−1}, so the horizon needed for
        // 1% grows as α approaches 1/2: t = 1e6 suffices away from the seam,
        // α = 0.4 needs ~1e12 (pure formula evaluation, still cheap).
        for (alpha, t) in [(0.1, 1e6), (0.25, 1e6), (0.4, 1e12)] {
            let lim = 1.0 / ((1.0 - 2.0 * alpha) * (1.0 - alpha));
            let v = variance_affine(alpha, 1.0, t) / t;
            assert!(rel_err(v, lim) < 0.01, "alpha={alpha}: {v} vs {lim}");
        }
        // Var/t^{2α} → 2β/(2α−1) for α > 1/2, (t+1)^{1−2α} correction.
        for (alpha, t) in [(0.6, 1e12), (0.8, 1e6)] {
            let lim = 2.0 / (2.0 * alpha - 1.0);
            let v = variance_affine(alpha, 1.0, t) / t.powf(2.0 * alpha);
            assert!(rel_err(v, lim) < 0.01, "alpha={alpha}: {v} vs {lim}");
        }
        // Var/(t log t) → 2β at α = 1/2. The correction is −2β/log t, so 2%
        // requires log t ≥ 100/... ≈ 50, i.e. t ~ 1e22; evaluate at 1e24.
        let v = variance_affine(0.5, 1.0, 1e24) / (1e24 * 1e24f64.ln());
        assert!(rel_err(v, 2.0) < 0.02, "{v}");
        // α = 0.25 line used by the CLT: constant 8/3.
        assert!(rel_err(variance_scaling(0.25, 1.0).constant(), 8.0 / 3.0) < 1e-12);
    }

    #[test]
    fn covariance_known_values() {
        // α=1, β=1, t=3, s=1 → 8 − 4 log 2.
        assert!(
            rel_err(
                covariance_affine(1.0, 1.0, 3.0, 1.0).unwrap(),
                8.0 - 4.0 * LN_2
            ) < 1e-12
        );
        // α=1/2, β=1, t=3, s=1 → 2[−2√2 + 2 + 2√2·log 2] = 2.2641783…
        let expected = 2.0 * (-2.0 * 2f64.sqrt() + 2.0 + 2.0 * 2f64.sqrt() * LN_2);
        assert!(rel_err(covariance_affine(0.5, 1.0, 3.0, 1.0).unwrap(), expected) < 1e-12);
        assert!((expected - 2.2641783244).abs() < 1e-9);
        assert!(covariance_affine(0.5, 1.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn covariance_converges_to_variance_at_t_equals_s() {
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let s = 2.0;
            let cov = covariance_affine(alpha, 1.0, s + 1e-9, s).unwrap();
            let var = variance_affine(alpha, 1.0, s);
            assert!(rel_err(cov, var) < 1e-5, "alpha={alpha}: {cov} vs {var}");
        }
    }

    #[test]
    fn linear_gamma_known_values() {
        let (m, v) = linear_gamma_stats(1.0, 1.0, 1.0);
        assert!((m - 1.0).abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
        let (m, v) = linear_gamma_stats(0.5, 2.0, 3.0);
        assert!((m - 2.0).abs() < 1e-12 && (v - 4.0).abs() < 1e-12);
        let (m, v) = linear_gamma_stats(0.7, 1.3, 0.0);
        assert_eq!((m, v), (0.0, 0.0));
    }

    #[test]
    fn negbin_pmf_known_values_and_normalization() {
        // α=1, γ=1, t=1: geometric with p = 1/2.
        assert!(rel_err(negbin_pmf(1.0, 1.0, 1.0, 0), 0.5) < 1e-12);
        assert!(rel_err(negbin_pmf(1.0, 1.0, 1.0, 1), 0.25) < 1e-12);
        // Normalization to 1e-10 with adaptive cutoff.
        for (alpha, gamma, t) in [(0.5, 2.0, 3.0), (1.5, 0.7, 1.0), (1.0, 2.5, 2.0)] {
            let mut total = 0.0;
            let mut k = 0u64;
            loop {
                let p = negbin_pmf(alpha, gamma, t, k);
                total += p;
                if (p < 1e-16 && k > 10) || k > 100_000 {
                    break;
                }
                k += 1;
            }
            assert!(
                (total - 1.0).abs() < 1e-10,
                "({alpha},{gamma},{t}): total {total}"
            );
        }
    }

    #[test]
    fn negbin_conditional_reductions() {
        // k=0 → q^{γ+m}.
        let q: f64 = (2.0f64 / 4.0).powf(0.5);
        let p0 = negbin_conditional_pmf(0.5, 2.0, 3.0, 1.0, 3, 0).unwrap();
        assert!(rel_err(p0, q.powf(5.0)) < 1e-12);
        // s=0, m=0 reduces to the marginal law.
        for k in 0..20 {
            let c = negbin_conditional_pmf(0.5, 2.0, 3.0, 0.0, 0, k).unwrap();
            assert!(rel_err(c, negbin_pmf(0.5, 2.0, 3.0, k)) < 1e-10, "k={k}");
        }
        assert!(negbin_conditional_pmf(0.5, 2.0, 1.0, 3.0, 0, 0).is_err());
    }

    #[test]
    fn negbin_chapman_kolmogorov() {
        // Σ_m P(N_s=m)·P(N_t=k | N_s=m) = P(N_t=k) for k ≤ 30.
        let (alpha, gamma, s, t) = (0.5, 2.0, 1.0, 3.0);
        for k in 0..=30u64 {
            let mut total = 0.0;
            for m in 0..=k {
                total += negbin_pmf(alpha, gamma, s, m)
                    * negbin_conditional_pmf(alpha, gamma, t, s, m, k - m).unwrap();
            }
            let direct = negbin_pmf(alpha, gamma, t, k);
            assert!((total - direct).abs() < 1e-9, "k={k}: {total} vs {direct}");
        }
    }

    #[test]
    fn ladder_matches_poisson_for_constant_rate() {
        let rf = RateFunction::constant(2.0).unwrap();
        let ladder = pmf_ladder(&rf, 0.0, 1.0, 60).unwrap();
        for k in 0..=30usize {
            let expected = (-2.0 + k as f64 * 2.0f64.ln() - ln_gamma(k as f64 + 1.0)).exp();
            assert!(
                (ladder.probs[k] - expected).abs() < 1e-9,
                "k={k}: {} vs {expected}",
                ladder.probs[k]
            );
        }
        assert!(!ladder.truncated_warning);
        assert!((ladder.probs.iter().sum::<f64>() + ladder.truncation_mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ladder_matches_negbin_for_linear_rate() {
        let rf = RateFunction::affine(0.5, 0.0).unwrap();
        let ladder = pmf_ladder(&rf, 2.0, 3.0, 60).unwrap();
        for k in 0..=50usize {
            let expected = negbin_pmf(0.5, 2.0, 3.0, k as u64);
            assert!(
                (ladder.probs[k] - expected).abs() < 1e-8,
                "k={k}: {} vs {expected}",
                ladder.probs[k]
            );
        }
    }

    #[test]
    fn ladder_void_probability_cross_check() {
        let rf = RateFunction::sqrt_shift();
        let ladder = pmf_ladder(&rf, 1.0, 2.0, 80).unwrap();
        assert!(
            ladder.void_check_gap < 1e-8,
            "gap {}",
            ladder.void_check_gap
        );
    }

    #[test]
    fn ladder_truncation_warning_fires() {
        let rf = RateFunction::constant(30.0).unwrap();
        let ladder = pmf_ladder(&rf, 0.0, 1.0, 10).unwrap();
        assert!(ladder.truncated_warning);
        assert!(ladder.truncation_mass > 0.9);
    }

    #[test]
    fn log_ladder_matches_exact_laws_in_far_tail() {
        // Linear rate: exact geometric, log P(N_1 = k) = (k+1)·log(1/2).
        let rf = RateFunction::affine(1.0, 0.0).unwrap();
        let logs = log_pmf_ladder(&rf, 1.0, 1.0, 220).unwrap();
        for k in [0usize, 1, 50, 200] {
            let expected = negbin_log_pmf(1.0, 1.0, 1.0, k as u64);
            assert!(
                (logs[k] - expected).abs() < 1e-6 * expected.abs().max(1.0),
                "k={k}: {} vs {expected}",
                logs[k]
            );
        }
        // Constant rate: exact Poisson down to e^{-600}.
        let rf = RateFunction::constant(3.0).unwrap();
        let logs = log_pmf_ladder(&rf, 0.0, 1.0, 150).unwrap();
        for k in [0usize, 10, 100, 150] {
            let expected = -3.0 + k as f64 * 3.0f64.ln() - ln_gamma(k as f64 + 1.0);
            assert!(
                (logs[k] - expected).abs() < 1e-5 * expected.abs().max(1.0),
                "k={k}: {} vs {expected}",
                logs[k]
            );
        }
    }

    #[test]
    fn geometric_tail_recovers_log_half_at_ell_200() {
        let lsf = negbin_log_sf(1.0, 1.0, 1.0, 200);
        let normalized = lsf / 200.0;
        assert!(rel_err(normalized, -LN_2) < 0.02, "{normalized}");
    }

    #[test]
    fn tail_asymptote_per_regime() {
        let lin = RateFunction::affine(1.0, 0.0).unwrap();
        match tail_asymptote(&lin, 1.0).unwrap() {
            TailLaw::Exponential { rate } => assert!(rel_err(rate, LN_2) < 1e-12),
            other => panic!("expected exponential law, got {other:?}"),
        }
        let sub = RateFunction::power(1.0, 0.5, 0.0).unwrap();
        assert_eq!(
            tail_asymptote(&sub, 1.0).unwrap(),
            TailLaw::PoissonType { coefficient: -0.5 }
        );
        let bounded = RateFunction::constant(3.0).unwrap();
        assert_eq!(
            tail_asymptote(&bounded, 1.0).unwrap(),
            TailLaw::PoissonType { coefficient: -1.0 }
        );
        let sup = RateFunction::power(1.0, 2.0, 1.0).unwrap();
        assert_eq!(tail_asymptote(&sup, 1.0).unwrap(), TailLaw::NoDecay);
    }

    #[test]
    fn flow_is_stationary_at_fixed_points() {
        let rf = RateFunction::sqrt_shift();
        let x_star = (1.0 + 5f64.sqrt()) / 2.0;
        let values = flow_at_times(&rf, x_star, &[1.0, 100.0, 1e6]).unwrap();
        for v in values {
            assert!((v - x_star).abs() < 1e-10, "drifted to {v}");
        }
    }

    #[test]
    fn flow_converges_to_golden_ratio_from_zero() {
        // Convergence is exponential in u = log(1+t) at rate 1−λ′(x*) ≈ 0.69:
        // the gap is ~1.3e-4 at t = 1e6 and below 1e-6 by t = 1e10.
        let rf = RateFunction::sqrt_shift();
        let x_star = (1.0 + 5f64.sqrt()) / 2.0;
        let v = flow_at_times(&rf, 0.0, &[1e6, 1e10]).unwrap();
        assert!((v[0] - x_star).abs() < 2e-4, "t=1e6 terminal {}", v[0]);
        assert!((v[1] - x_star).abs() < 1e-6, "t=1e10 terminal {}", v[1]);
    }

    #[test]
    fn flow_selects_neighboring_stable_point() {
        let rf = RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap();
        let fps = rf.find_fixed_points(20.0).unwrap();
        let stable = fps.stable_locations();
        let unstable = fps.unstable_locations()[0];
        // Start between the unstable point and the upper stable point.
        let y0 = 0.5 * (unstable + stable[1]);
        let v = flow_at_times(&rf, y0, &[1e12]).unwrap()[0];
        assert!(
            (v - stable[1]).abs() < 1e-5,
            "terminal {v} vs {}",
            stable[1]
        );
        // Below the unstable point the flow falls to the lower one.
        let v = flow_at_times(&rf, unstable - 0.5, &[1e12]).unwrap()[0];
        assert!(
            (v - stable[0]).abs() < 1e-5,
            "terminal {v} vs {}",
            stable[0]
        );
        assert_eq!(fps.points[1].class, StabilityClass::Unstable);
    }

    #[test]
    fn flow_matches_affine_mean_exactly() {
        // For affine rates the flow from 0 equals E[N_t]/(t+1).
        let rf = RateFunction::affine(0.25, 1.0).unwrap();
        let times = [1.0, 10.0, 1e3];
        let values = flow_at_times(&rf, 0.0, &times).unwrap();
        for (&t, v) in times.iter().zip(values) {
            let expected = mean_affine(0.25, 1.0, t) / (t + 1.0);
            assert!(rel_err(v, expected) < 1e-9, "t={t}: {v} vs {expected}");
        }
    }

    #[test]
    fn flow_is_monotone_between_fixed_points() {
        let rf = RateFunction::sqrt_shift();
        let curve = deterministic_flow(&rf, 0.2, 1e4).unwrap();
        for w in curve.samples.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12, "flow not monotone: {w:?}");
        }
        let x_star = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(curve.samples.iter().all(|&(_, y)| y <= x_star + 1e-9));
    }
}
