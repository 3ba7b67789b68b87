//! Sample-path large-deviations rate functional
//!
//! `I(f) = ∫₀¹ log(f′(α)/λ(f(α)/α))·f′(α) dα − ∫₀¹ [f′(α) − λ(f(α)/α)] dα`
//!
//! evaluated on piecewise-linear counting paths, plus the scalar rate
//! `I(x) = inf{ I(f) : f(0)=0, f(1)=x, f nondecreasing }` by projected
//! descent over node values, and Euler–Lagrange stationarity diagnostics.
//!
//! The integrand is the relative-entropy form `a·log(a/b) − a + b` with
//! `a = f′` and `b = λ(f/α)`, hence nonnegative; `a > 0` against `b = 0`
//! carries genuinely infinite cost and is reported as `+∞`, never as a large
//! float. On the first grid segment `f(α)/α` equals the segment slope
//! identically (paths start at the origin), which realizes the `α → 0⁺`
//! limit `f(α)/α → f′(0)` without special-casing the endpoint.
//!
//! Zero set caveat: `I(x) = 0` exactly at fixed points of `x = λ(x)` when
//! the crossing is unique, but an unstable fixed point `x₂` admits zero-cost
//! escape paths `f(α)/α = x₂ − C·α^{λ′(x₂)−1}` (the flow ODE is singular and
//! non-unique at `α = 0`), so for multi-stable rates the infimum vanishes on
//! the whole interval between the outer stable points. The minimizer finds
//! discretizations of these paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::quad::gauss_legendre_32;
use crate::numerics::stats::pava_nondecreasing;
use crate::rate_fn::{GrowthClass, RateFnError, RateFunction};

#[derive(Debug, Error)]
pub enum LdpError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rate function error: {0}")]
    RateFn(#[from] RateFnError),
}

/// Piecewise-linear nondecreasing path on `[0, 1]` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, LdpError> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(LdpError::InvalidPath(format!(
                "grid and values must have equal length >= 2, got {} and {}",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(LdpError::InvalidPath("grid must run from 0 to 1".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LdpError::InvalidPath(
                "grid must be strictly increasing".into(),
            ));
        }
        if values[0] != 0.0 {
            return Err(LdpError::InvalidPath(format!(
                "f(0) must be 0, got {}",
                values[0]
            )));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(LdpError::InvalidPath(
                "counting paths must be nondecreasing".into(),
            ));
        }
        Ok(Path { grid, values })
    }

    /// The straight line `f(α) = α·x` on a uniform grid with `n` segments.
    pub fn linear(x: f64, n: usize) -> Self {
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&a| a * x).collect();
        Path { grid, values }
    }

    /// A path with the given interior/terminal values on a uniform grid
    /// (`values[0]` must be 0); used by the minimizer.
    fn from_uniform(values: Vec<f64>) -> Self {
        let n = values.len() - 1;
        let grid = (0..=n).map(|i| i as f64 / n as f64).collect();
        Path { grid, values }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn segments(&self) -> usize {
        self.grid.len() - 1
    }

    fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i])
    }

    /// Linear interpolation onto a uniform grid with `n` segments.
    fn resample_uniform(&self, n: usize) -> Path {
        let mut values = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let a = i as f64 / n as f64;
            let j = self
                .grid
                .partition_point(|&g| g <= a)
                .min(self.grid.len() - 1)
                - 1;
            let (g0, g1) = (self.grid[j], self.grid[j + 1]);
            let t = (a - g0) / (g1 - g0);
            values.push(self.values[j] * (1.0 - t) + self.values[j + 1] * t);
        }
        values[0] = 0.0;
        let terminal = self.terminal();
        *values.last_mut().unwrap() = terminal;
        Path::from_uniform(values)
    }
}

/// Result of a rate evaluation or minimization. `value` is `+∞` exactly when
/// the path forces jumps against zero intensity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateValue {
    pub value: f64,
    /// `(α, L(α, f, f′))` at segment midpoints, for diagnostics.
    pub integrand_samples: Vec<(f64, f64)>,
    /// Present on scalar rates: the minimizing path.
    pub minimizer: Option<Path>,
    /// False when the descent hit its iteration cap before stationarity.
    pub converged: bool,
    /// Set when the rate function is unbounded: the functional is evaluated
    /// as written but the sample-path theorem behind it assumes a bounded
    /// rate, so the number is formal.
    pub formal: bool,
}

fn is_formal(rf: &RateFunction) -> bool {
    !matches!(rf.classify_growth(), GrowthClass::Bounded { .. })
}

/// Pointwise Lagrangian `L(α, f, f′) = f′·log(f′/λ(f/α)) − f′ + λ(f/α)`,
/// with the conventions `0·log 0 = 0` and `f′ > 0` against `λ = 0` → `+∞`.
pub fn lagrangian(
    rf: &RateFunction,
    alpha: f64,
    f_val: f64,
    f_slope: f64,
) -> Result<f64, LdpError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LdpError::Domain(format!(
            "lagrangian is defined for alpha in (0, 1], got {alpha}"
        )));
    }
    if f_val < 0.0 || f_slope < 0.0 {
        return Err(LdpError::Domain(format!(
            "counting paths need f >= 0 and f' >= 0, got f={f_val}, f'={f_slope}"
        )));
    }
    Ok(lagrangian_raw(f_slope, rf.value(f_val / alpha)))
}

#[inline]
fn lagrangian_raw(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return b; // suppressing all jumps costs the full intensity mass
    }
    if b <= 0.0 {
        return f64::INFINITY;
    }
    a * (a / b).ln() - a + b
}

/// `I(f)` by composite 32-node Gauss–Legendre quadrature per linear segment.
pub fn rate_of_path(rf: &RateFunction, path: &Path) -> RateValue {
    let (nodes, weights) = gauss_legendre_32();
    let mut total = 0.0;
    let mut samples = Vec::with_capacity(path.segments());
    for i in 0..path.segments() {
        let (a0, a1) = (path.grid[i], path.grid[i + 1]);
        let slope = path.slope(i);
        let half = 0.5 * (a1 - a0);
        let mid = 0.5 * (a0 + a1);
        let mut acc = 0.0;
        for (&xq, &wq) in nodes.iter().zip(weights) {
            let alpha = mid + half * xq;
            // First segment: f(α)/α is identically the slope (f(0) = 0).
            let z = if i == 0 {
                slope
            } else {
                (path.values[i] + slope * (alpha - a0)) / alpha
            };
            acc += wq * lagrangian_raw(slope, rf.value(z));
        }
        total += half * acc;
        let z_mid = if i == 0 {
            slope
        } else {
            (path.values[i] + slope * (mid - a0)) / mid
        };
        samples.push((mid, lagrangian_raw(slope, rf.value(z_mid))));
        if !total.is_finite() {
            return RateValue {
                value: f64::INFINITY,
                integrand_samples: samples,
                minimizer: None,
                converged: true,
                formal: is_formal(rf),
            };
        }
    }
    RateValue {
        value: total,
        integrand_samples: samples,
        minimizer: None,
        converged: true,
        formal: is_formal(rf),
    }
}

/// Quadrature contribution of segment `i` (of `n`): value, gradient and
/// Hessian terms with respect to the left and right node values. Segment 0
/// uses `b = λ(slope)` (the `f/α → f′(0)` convention, exact there since
/// `f(α)/α` equals the slope identically); its value never depends on the
/// left node, which is pinned to 0.
#[derive(Debug, Clone, Copy, Default)]
struct SegmentQuad {
    value: f64,
    d_left: f64,
    d_right: f64,
    h_ll: f64,
    h_lr: f64,
    h_rr: f64,
}

fn segment_quad(rf: &RateFunction, i: usize, n: usize, left: f64, right: f64) -> SegmentQuad {
    let dalpha = 1.0 / n as f64;
    let a0 = i as f64 * dalpha;
    let slope = ((right - left) / dalpha).max(0.0);
    // Floor for 1/a and log(a) terms where the slope collapses to zero;
    // keeps Newton systems finite while the projection pins such nodes.
    let a_floor = 1e-9 * (1.0 + right.abs());
    let mut out = SegmentQuad::default();
    if i == 0 {
        // L depends on the slope only; the integral over the segment is exact.
        let b = rf.value(slope);
        let l = lagrangian_raw(slope, b);
        if !l.is_finite() {
            return SegmentQuad {
                value: f64::INFINITY,
                ..SegmentQuad::default()
            };
        }
        out.value = dalpha * l;
        if b > 0.0 {
            let a = slope.max(a_floor);
            let bp = rf.slope(slope);
            let bpp = rf.curvature(slope);
            let dl_da = (a / b).ln() + bp * (1.0 - a / b);
            let d2l_daa = 1.0 / a - bp / b + bpp * (1.0 - a / b) - bp * (b - a * bp) / (b * b);
            out.d_right = dl_da;
            out.d_left = -dl_da;
            out.h_rr = d2l_daa / dalpha;
            out.h_ll = d2l_daa / dalpha;
            out.h_lr = -d2l_daa / dalpha;
        }
        return out;
    }
    let half = 0.5 * dalpha;
    let mid = a0 + half;
    let (nodes, weights) = gauss_legendre_32();
    for (&xq, &wq) in nodes.iter().zip(weights) {
        let alpha = mid + half * xq;
        let theta = (alpha - a0) / dalpha;
        let w = wq * half;
        let f = left + slope * (alpha - a0);
        let z = (f / alpha).max(0.0);
        let b = rf.value(z);
        let l = lagrangian_raw(slope, b);
        if !l.is_finite() {
            return SegmentQuad {
                value: f64::INFINITY,
                ..SegmentQuad::default()
            };
        }
        out.value += w * l;
        if b > 0.0 {
            let a = slope.max(a_floor);
            let bp = rf.slope(z);
            let bpp = rf.curvature(z);
            let dl_da = (a / b).ln();
            let dl_df = bp / alpha * (1.0 - a / b);
            let laa = 1.0 / a;
            let laf = -bp / (alpha * b);
            let lff = (bpp * (1.0 - a / b) + a * bp * bp / (b * b)) / (alpha * alpha);
            out.d_left += w * (-dl_da / dalpha + dl_df * (1.0 - theta));
            out.d_right += w * (dl_da / dalpha + dl_df * theta);
            let dd = dalpha * dalpha;
            out.h_ll += w
                * (laa / dd - 2.0 * (1.0 - theta) / dalpha * laf
                    + (1.0 - theta) * (1.0 - theta) * lff);
            out.h_rr += w * (laa / dd + 2.0 * theta / dalpha * laf + theta * theta * lff);
            out.h_lr +=
                w * (-laa / dd + laf * (1.0 - 2.0 * theta) / dalpha + theta * (1.0 - theta) * lff);
        }
    }
    out
}

/// Objective and gradient w.r.t. the interior node values of a uniform-grid
/// path (endpoints pinned). Gradient entries are for `values[1..n]`.
#[cfg(test)]
fn objective_and_gradient(rf: &RateFunction, values: &[f64], grad: &mut [f64]) -> f64 {
    let n = values.len() - 1;
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let sq = segment_quad(rf, i, n, values[i], values[i + 1]);
        total += sq.value;
        if !total.is_finite() {
            return f64::INFINITY;
        }
        if i >= 1 {
            grad[i - 1] += sq.d_left;
        }
        if i < n - 1 {
            grad[i] += sq.d_right;
        }
    }
    total
}

/// Symmetric tridiagonal solve `H d = −g` by LDLᵀ. Returns false on a
/// non-positive pivot (caller adds Levenberg damping and retries).
fn tridiag_solve(diag: &[f64], off: &[f64], rhs: &[f64], out: &mut [f64]) -> bool {
    let m = diag.len();
    let mut d = vec![0.0; m];
    let mut l = vec![0.0; m.saturating_sub(1)];
    d[0] = diag[0];
    if d[0] <= 1e-300 {
        return false;
    }
    for j in 1..m {
        l[j - 1] = off[j - 1] / d[j - 1];
        d[j] = diag[j] - l[j - 1] * off[j - 1];
        if d[j] <= 1e-300 {
            return false;
        }
    }
    // Forward substitution (L y = rhs), then D, then Lᵀ.
    out[0] = rhs[0];
    for j in 1..m {
        out[j] = rhs[j] - l[j - 1] * out[j - 1];
    }
    for j in 0..m {
        out[j] /= d[j];
    }
    for j in (0..m - 1).rev() {
        out[j] -= l[j] * out[j + 1];
    }
    true
}

/// Iteration cap for the projected Newton descent.
pub const SCALAR_RATE_MAX_ITERS: usize = 500;

/// Scalar rate `I(x)`: minimizes [`rate_of_path`] over nondecreasing paths
/// pinned at `f(0) = 0`, `f(1) = x` on a uniform `n_grid` grid, by spectral
/// projected gradient descent from the straight line, then polishes on a
/// once-refined grid (`2·n_grid`).
pub fn scalar_rate(rf: &RateFunction, x: f64, n_grid: usize) -> Result<RateValue, LdpError> {
    scalar_rate_with_start(rf, x, n_grid, None)
}

/// As [`scalar_rate`] but optionally starting from a caller-supplied path
/// (used to check that descent lands in the same minimum from random starts).
pub fn scalar_rate_with_start(
    rf: &RateFunction,
    x: f64,
    n_grid: usize,
    start: Option<&Path>,
) -> Result<RateValue, LdpError> {
    if !(x >= 0.0) {
        return Err(LdpError::Domain(format!(
            "scalar rate requires x >= 0, got {x}"
        )));
    }
    if n_grid < 2 {
        return Err(LdpError::Domain(format!(
            "n_grid must be >= 2, got {n_grid}"
        )));
    }
    let start_values = match start {
        Some(p) => {
            if (p.terminal() - x).abs() > 1e-12 {
                return Err(LdpError::InvalidPath(format!(
                    "start path must end at x={x}, got {}",
                    p.terminal()
                )));
            }
            p.resample_uniform(n_grid).values
        }
        None => Path::linear(x, n_grid).values,
    };
    let (coarse_values, conv_a) = minimize(rf, start_values, x);
    // Polish on the doubled grid.
    let fine_start = Path::from_uniform(coarse_values)
        .resample_uniform(2 * n_grid)
        .values;
    let (fine_values, conv_b) = minimize(rf, fine_start, x);
    let path = Path::from_uniform(fine_values);
    let mut out = rate_of_path(rf, &path);
    out.converged = conv_a && conv_b;
    out.minimizer = Some(path);
    Ok(out)
}

/// Projected Newton descent over interior node values: the Hessian of the
/// quadrature objective is tridiagonal (segments couple adjacent nodes only),
/// so each step is an O(n) LDLᵀ solve with Levenberg damping, followed by a
/// backtracking line search on the monotone-cone projection (isotonic
/// regression, then clamping to `[0, x]`; exact for constant bounds).
fn minimize(rf: &RateFunction, mut values: Vec<f64>, x: f64) -> (Vec<f64>, bool) {
    let n = values.len() - 1;
    if n < 2 || x == 0.0 {
        return (vec![0.0; n + 1], true);
    }
    let project = |v: &mut Vec<f64>| {
        let fitted = pava_nondecreasing(&v[1..n]);
        for (t, f) in v[1..n].iter_mut().zip(fitted) {
            *t = f.clamp(0.0, x);
        }
        v[0] = 0.0;
        v[n] = x;
    };
    project(&mut values);
    let assemble = |v: &[f64], grad: &mut [f64], diag: &mut [f64], off: &mut [f64]| -> f64 {
        for g in grad.iter_mut() {
            *g = 0.0;
        }
        for d in diag.iter_mut() {
            *d = 0.0;
        }
        for e in off.iter_mut() {
            *e = 0.0;
        }
        let mut total = 0.0;
        for i in 0..n {
            let sq = segment_quad(rf, i, n, v[i], v[i + 1]);
            total += sq.value;
            if !total.is_finite() {
                return f64::INFINITY;
            }
            if i >= 1 {
                grad[i - 1] += sq.d_left;
                diag[i - 1] += sq.h_ll;
            }
            if i < n - 1 {
                grad[i] += sq.d_right;
                diag[i] += sq.h_rr;
            }
            if i >= 1 && i < n - 1 {
                off[i - 1] += sq.h_lr;
            }
        }
        total
    };
    let m = n - 1;
    let mut grad = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m - 1];
    let mut obj = assemble(&values, &mut grad, &mut diag, &mut off);
    if !obj.is_finite() {
        // Degenerate start against a zero-intensity region: the straight line
        // is interior whenever anything is.
        values = Path::linear(x, n).values;
        obj = assemble(&values, &mut grad, &mut diag, &mut off);
        if !obj.is_finite() {
            return (values, true); // the infimum itself is +∞
        }
    }
    let mut dir = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    for _iter in 0..SCALAR_RATE_MAX_ITERS {
        // Newton direction with escalating damping until factorization holds.
        let max_diag = diag.iter().cloned().fold(1e-12, f64::max);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut mu = 0.0;
        let solved = loop {
            let damped: Vec<f64> = diag.iter().map(|d| d + mu).collect();
            if tridiag_solve(&damped, &off, &rhs, &mut dir) {
                break true;
            }
            mu = if mu == 0.0 {
                1e-10 * max_diag
            } else {
                mu * 100.0
            };
            if mu > 1e8 * max_diag {
                break false;
            }
        };
        if !solved {
            // Fall back to a plain gradient direction.
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g / max_diag;
            }
        }
        // Backtracking on the projected trial.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = values.clone();
            for j in 1..n {
                trial[j] += step * dir[j - 1];
            }
            project(&mut trial);
            let mut t_grad = std::mem::take(&mut scratch);
            let mut t_diag = vec![0.0; m];
            let mut t_off = vec![0.0; m.saturating_sub(1)];
            let trial_obj = assemble(&trial, &mut t_grad, &mut t_diag, &mut t_off);
            if trial_obj.is_finite() && trial_obj < obj {
                let displacement = trial[1..n]
                    .iter()
                    .zip(&values[1..n])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                let improvement = obj - trial_obj;
                values = trial;
                obj = trial_obj;
                scratch = std::mem::replace(&mut grad, t_grad);
                diag = t_diag;
                off = t_off;
                accepted = true;
                if displacement < 1e-12 * (1.0 + x) || improvement < 1e-15 * (1.0 + obj.abs()) {
                    return (values, true);
                }
                break;
            }
            scratch = t_grad;
            step *= 0.5;
        }
        if !accepted {
            // No descent direction survives the projection: stationary.
            return (values, true);
        }
    }
    (values, false)
}

/// Euler–Lagrange residual of a path: `∂L/∂f − d/dα ∂L/∂f′` discretized with
/// central differences at interior grid nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElResidual {
    /// Max |residual| over the evaluated interior nodes.
    pub max_abs: f64,
    /// `(α_i, residual_i)` per evaluated interior node. The discretization
    /// error carries a `1/α` amplification, so residuals near `α = 0` are
    /// dominated by truncation even on exact minimizers.
    pub profile: Vec<(f64, f64)>,
    /// Interior node indices skipped because a neighboring slope was zero
    /// (the `log f′` term is undefined there).
    pub skipped_nodes: Vec<usize>,
}

impl ElResidual {
    /// Max |residual| over nodes with `α ≥ alpha_min`.
    pub fn max_abs_from(&self, alpha_min: f64) -> f64 {
        self.profile
            .iter()
            .filter(|(a, _)| *a >= alpha_min)
            .map(|(_, r)| r.abs())
            .fold(0.0, f64::max)
    }
}

pub fn euler_lagrange_residual(rf: &RateFunction, path: &Path) -> Result<ElResidual, LdpError> {
    let n = path.segments();
    if n < 2 {
        return Err(LdpError::Domain(
            "need at least two segments for the residual".into(),
        ));
    }
    // ∂L/∂f′ = log f′ − log λ(f/α) at segment midpoints.
    let mut g_mid = Vec::with_capacity(n);
    let mut mids = Vec::with_capacity(n);
    for i in 0..n {
        let s = path.slope(i);
        let mid = 0.5 * (path.grid[i] + path.grid[i + 1]);
        let z = if i == 0 {
            s
        } else {
            (path.values[i] + s * (mid - path.grid[i])) / mid
        };
        let b = rf.value(z.max(0.0));
        g_mid.push(if s > 0.0 && b > 0.0 {
            s.ln() - b.ln()
        } else {
            f64::NAN
        });
        mids.push(mid);
    }
    let mut max_abs = 0.0f64;
    let mut profile = Vec::with_capacity(n - 1);
    let mut skipped = Vec::new();
    for i in 1..n {
        if !g_mid[i].is_finite() || !g_mid[i - 1].is_finite() {
            skipped.push(i);
            continue;
        }
        let alpha = path.grid[i];
        let f = path.values[i];
        let fprime =
            (path.values[i + 1] - path.values[i - 1]) / (path.grid[i + 1] - path.grid[i - 1]);
        let z = f / alpha;
        let b = rf.value(z.max(0.0));
        if b <= 0.0 {
            skipped.push(i);
            continue;
        }
        let dl_df = rf.slope(z.max(0.0)) / alpha * (1.0 - fprime / b);
        let dg = (g_mid[i] - g_mid[i - 1]) / (mids[i] - mids[i - 1]);
        let residual = dl_df - dg;
        profile.push((alpha, residual));
        max_abs = max_abs.max(residual.abs());
    }
    Ok(ElResidual {
        max_abs,
        profile,
        skipped_nodes: skipped,
    })
}
