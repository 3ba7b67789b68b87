//! The rate function `λ(·)`: evaluation, derivative, growth regime, and the
//! fixed points of `x = λ(x)` with stability classification.
//!
//! Every built-in kind is validated on construction: `λ(x) ≥ 0` on the
//! nonnegative axis (dense grid plus per-kind analytic checks) and a
//! monotonicity flag is recorded, since the thinning sampler's dominating
//! bound is only valid for nondecreasing rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::roots;

/// Tolerance on `|λ(x*) − x*|` for every reported fixed point.
pub const FP_TOL: f64 = 1e-12;
/// Margin on `|λ′(x*) − 1|` inside which the saddle probe runs.
pub const CLASS_MARGIN: f64 = 1e-6;
/// Probe offset used to classify marginal fixed points.
pub const PROBE_DELTA: f64 = 1e-4;
/// Identity-segment detection tolerance for piecewise-linear rates.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RateFnError {
    #[error("rate function argument must be nonnegative, got {0}")]
    NegativeArgument(f64),
    #[error("invalid rate function: {0}")]
    Invalid(String),
    #[error("search bound must be positive and finite, got {0}")]
    InvalidSearchBound(f64),
}

/// Parameter record for a rate function; the tagged serde form is the config
/// file contract (`{"kind":"affine","alpha":0.5,"beta":1.0}`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateKind {
    /// `λ(z) = beta + alpha·z`
    Affine { alpha: f64, beta: f64 },
    /// `λ(z) = alpha·(z + shift)^exponent`
    Power {
        alpha: f64,
        exponent: f64,
        shift: f64,
    },
    /// `λ(z) = √(1 + z)`
    SqrtShift,
    /// `λ(z) = a·z − sin(b·z) + c`
    SineMix { a: f64, b: f64, c: f64 },
    /// Piecewise-linear through `knots = [(x_i, v_i)]` (first abscissa 0),
    /// continuing with `terminal_slope` beyond the last knot.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
        terminal_slope: f64,
    },
    /// `λ(z) = level`
    Constant { level: f64 },
}

/// A validated rate function. Immutable after construction and safe to share
/// across threads; all operations are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateKind", into = "RateKind")]
pub struct RateFunction {
    kind: RateKind,
    monotone: bool,
}

impl TryFrom<RateKind> for RateFunction {
    type Error = RateFnError;
    fn try_from(kind: RateKind) -> Result<Self, Self::Error> {
        RateFunction::new(kind)
    }
}

impl From<RateFunction> for RateKind {
    fn from(rf: RateFunction) -> RateKind {
        rf.kind
    }
}

/// Growth regime of `λ`, decided analytically per kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum GrowthClass {
    /// `λ(z)/z^beta_exp → alpha` with `beta_exp < 1`.
    Sublinear { alpha: f64, beta_exp: f64 },
    /// `λ(z)/z → alpha_lim`.
    AsymptoticallyLinear { alpha_lim: f64 },
    /// `λ(z)/z → ∞`; `explosive` records whether `∫ dz/λ(z) < ∞`.
    Superlinear { explosive: bool },
    /// `λ ≤ sup` everywhere.
    Bounded { sup: f64 },
}

/// Stability classification of a fixed point of `x = λ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum StabilityClass {
    Stable,
    Unstable,
    /// Attracting from the left, repelling to the right.
    SaddleLeftStable,
    /// Repelling to the left, attracting from the right.
    SaddleRightStable,
    /// A segment on which `λ(x) ≡ x`; every point of it is fixed.
    Interval {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointEntry {
    /// Location of the fixed point (the lower endpoint for intervals).
    pub location: f64,
    /// `λ′` at the point (right derivative; 1 for identity intervals).
    pub slope: f64,
    pub class: StabilityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// Fixed points sorted ascending by location.
    pub points: Vec<FixedPointEntry>,
    /// Whether the search interval provably brackets all solutions.
    pub complete: bool,
}

impl FixedPointReport {
    pub fn stable_locations(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.class == StabilityClass::Stable)
            .map(|p| p.location)
            .collect()
    }

    pub fn unstable_locations(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.class == StabilityClass::Unstable)
            .map(|p| p.location)
            .collect()
    }
}

impl RateFunction {
    /// Validates the parameter record and freezes the monotonicity flag.
    pub fn new(kind: RateKind) -> Result<Self, RateFnError> {
        let err = |msg: String| Err(RateFnError::Invalid(msg));
        match &kind {
            RateKind::Affine { alpha, beta } => {
                if !(*alpha >= 0.0) || !alpha.is_finite() {
                    return err(format!("affine slope must be >= 0, got {alpha}"));
                }
                if !(*beta >= 0.0) || !beta.is_finite() {
                    return err(format!("affine intercept must be >= 0, got {beta}"));
                }
            }
            RateKind::Power {
                alpha,
                exponent,
                shift,
            } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return err(format!("power coefficient must be > 0, got {alpha}"));
                }
                if !(*exponent > 0.0) || !exponent.is_finite() {
                    return err(format!("power exponent must be > 0, got {exponent}"));
                }
                if !(*shift >= 0.0) || !shift.is_finite() {
                    return err(format!("power shift must be >= 0, got {shift}"));
                }
            }
            RateKind::SqrtShift => {}
            RateKind::SineMix { a, b, c } => {
                for (name, v) in [("a", a), ("b", b), ("c", c)] {
                    if !v.is_finite() {
                        return err(format!("sine_mix parameter {name} must be finite, got {v}"));
                    }
                }
                if *a < 0.0 {
                    return err(format!("sine_mix linear slope must be >= 0, got {a}"));
                }
            }
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => {
                if knots.is_empty() {
                    return err("piecewise_linear requires at least one knot".into());
                }
                if knots[0].0 != 0.0 {
                    return err(format!(
                        "piecewise_linear first knot abscissa must be 0, got {}",
                        knots[0].0
                    ));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return err(format!(
                            "piecewise_linear knots must be strictly increasing, got {} then {}",
                            w[0].0, w[1].0
                        ));
                    }
                }
                for &(x, v) in knots {
                    if !x.is_finite() || !v.is_finite() || v < 0.0 {
                        return err(format!(
                            "piecewise_linear knot ({x}, {v}) must be finite with value >= 0"
                        ));
                    }
                }
                if !(*terminal_slope >= 0.0) || !terminal_slope.is_finite() {
                    return err(format!("terminal_slope must be >= 0, got {terminal_slope}"));
                }
            }
            RateKind::Constant { level } => {
                if !(*level >= 0.0) || !level.is_finite() {
                    return err(format!("constant level must be >= 0, got {level}"));
                }
            }
        }

        let monotone = Self::monotone_analytic(&kind);
        let rf = RateFunction { kind, monotone };

        // Dense-grid safety net on top of the analytic parameter checks.
        let span = rf.validation_span();
        let n = 20_000;
        let mut prev = rf.value(0.0);
        if prev < 0.0 {
            return err(format!("rate is negative at 0: {prev}"));
        }
        for i in 1..=n {
            let x = span * i as f64 / n as f64;
            let v = rf.value(x);
            if v < 0.0 {
                return err(format!("rate is negative at x={x}: {v}"));
            }
            if monotone && v < prev - 1e-9 * (1.0 + prev.abs()) {
                return err(format!("rate flagged monotone but decreases near x={x}"));
            }
            prev = v;
        }
        Ok(rf)
    }

    pub fn affine(alpha: f64, beta: f64) -> Result<Self, RateFnError> {
        Self::new(RateKind::Affine { alpha, beta })
    }

    pub fn power(alpha: f64, exponent: f64, shift: f64) -> Result<Self, RateFnError> {
        Self::new(RateKind::Power {
            alpha,
            exponent,
            shift,
        })
    }

    pub fn sqrt_shift() -> Self {
        Self::new(RateKind::SqrtShift).expect("sqrt_shift is always valid")
    }

    pub fn sine_mix(a: f64, b: f64, c: f64) -> Result<Self, RateFnError> {
        Self::new(RateKind::SineMix { a, b, c })
    }

    pub fn piecewise_linear(
        knots: Vec<(f64, f64)>,
        terminal_slope: f64,
    ) -> Result<Self, RateFnError> {
        Self::new(RateKind::PiecewiseLinear {
            knots,
            terminal_slope,
        })
    }

    pub fn constant(level: f64) -> Result<Self, RateFnError> {
        Self::new(RateKind::Constant { level })
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    /// Whether `λ` is nondecreasing (required by the thinning sampler).
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    fn monotone_analytic(kind: &RateKind) -> bool {
        match kind {
            RateKind::Affine { .. }
            | RateKind::Power { .. }
            | RateKind::SqrtShift
            | RateKind::Constant { .. } => true,
            RateKind::SineMix { a, b, .. } => *a >= b.abs(),
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => *terminal_slope >= 0.0 && knots.windows(2).all(|w| w[1].1 >= w[0].1),
        }
    }

    fn validation_span(&self) -> f64 {
        match &self.kind {
            RateKind::SineMix { b, .. } => {
                let period = if *b == 0.0 {
                    1.0
                } else {
                    2.0 * std::f64::consts::PI / b.abs()
                };
                (8.0 * period).max(50.0)
            }
            RateKind::PiecewiseLinear { knots, .. } => 2.0 * knots.last().unwrap().0 + 10.0,
            _ => 50.0,
        }
    }

    /// `λ(x)` for `x ≥ 0`; panics are avoided by clamping never — callers with
    /// untrusted input use [`RateFunction::evaluate`].
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match &self.kind {
            RateKind::Affine { alpha, beta } => beta + alpha * x,
            RateKind::Power {
                alpha,
                exponent,
                shift,
            } => alpha * (x + shift).powf(*exponent),
            RateKind::SqrtShift => (1.0 + x).sqrt(),
            RateKind::SineMix { a, b, c } => a * x - (b * x).sin() + c,
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => {
                let &(last_x, last_v) = knots.last().unwrap();
                if x >= last_x {
                    return last_v + terminal_slope * (x - last_x);
                }
                // partition_point: first knot with abscissa > x, minus one.
                let idx = knots.partition_point(|&(kx, _)| kx <= x) - 1;
                let (x0, v0) = knots[idx];
                let (x1, v1) = knots[idx + 1];
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
            RateKind::Constant { level } => *level,
        }
    }

    /// `λ(x)`; rejects negative arguments.
    pub fn evaluate(&self, x: f64) -> Result<f64, RateFnError> {
        if x < 0.0 || x.is_nan() {
            return Err(RateFnError::NegativeArgument(x));
        }
        Ok(self.value(x))
    }

    /// Analytic `λ′(x)`; the right derivative at piecewise-linear knots.
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match &self.kind {
            RateKind::Affine { alpha, .. } => *alpha,
            RateKind::Power {
                alpha,
                exponent,
                shift,
            } => alpha * exponent * (x + shift).powf(exponent - 1.0),
            RateKind::SqrtShift => 0.5 / (1.0 + x).sqrt(),
            RateKind::SineMix { a, b, .. } => a - b * (b * x).cos(),
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => {
                let &(last_x, _) = knots.last().unwrap();
                if x >= last_x {
                    return *terminal_slope;
                }
                let idx = knots.partition_point(|&(kx, _)| kx <= x) - 1;
                let (x0, v0) = knots[idx];
                let (x1, v1) = knots[idx + 1];
                (v1 - v0) / (x1 - x0)
            }
            RateKind::Constant { .. } => 0.0,
        }
    }

    /// `λ′(x)`; rejects negative arguments.
    pub fn derivative(&self, x: f64) -> Result<f64, RateFnError> {
        if x < 0.0 || x.is_nan() {
            return Err(RateFnError::NegativeArgument(x));
        }
        Ok(self.slope(x))
    }

    /// Analytic `λ″(x)` (zero on piecewise-linear segments; right-sided at
    /// knots). Used by curvature-aware optimizers.
    #[inline]
    pub fn curvature(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match &self.kind {
            RateKind::Affine { .. }
            | RateKind::PiecewiseLinear { .. }
            | RateKind::Constant { .. } => 0.0,
            RateKind::Power {
                alpha,
                exponent,
                shift,
            } => alpha * exponent * (exponent - 1.0) * (x + shift).powf(exponent - 2.0),
            RateKind::SqrtShift => -0.25 / (1.0 + x).powf(1.5),
            RateKind::SineMix { b, .. } => b * b * (b * x).sin(),
        }
    }

    /// Central finite difference with step `h = max(1e-6, 1e-8·x)`; used as an
    /// independent check on the analytic derivatives.
    pub fn derivative_fd(&self, x: f64) -> Result<f64, RateFnError> {
        if x < 0.0 || x.is_nan() {
            return Err(RateFnError::NegativeArgument(x));
        }
        let h = (1e-8 * x).max(1e-6);
        let lo = (x - h).max(0.0);
        Ok((self.value(x + h) - self.value(lo)) / (x + h - lo))
    }

    /// Growth regime, decided analytically per kind.
    pub fn classify_growth(&self) -> GrowthClass {
        match &self.kind {
            RateKind::Affine { alpha, beta } => {
                if *alpha > 0.0 {
                    GrowthClass::AsymptoticallyLinear { alpha_lim: *alpha }
                } else {
                    GrowthClass::Bounded { sup: *beta }
                }
            }
            RateKind::Power {
                alpha, exponent, ..
            } => {
                if *exponent < 1.0 {
                    GrowthClass::Sublinear {
                        alpha: *alpha,
                        beta_exp: *exponent,
                    }
                } else if *exponent == 1.0 {
                    GrowthClass::AsymptoticallyLinear { alpha_lim: *alpha }
                } else {
                    // ∫ dz/(α(z+s)^e) < ∞ for e > 1.
                    GrowthClass::Superlinear { explosive: true }
                }
            }
            RateKind::SqrtShift => GrowthClass::Sublinear {
                alpha: 1.0,
                beta_exp: 0.5,
            },
            RateKind::SineMix { a, c, .. } => {
                if *a > 0.0 {
                    GrowthClass::AsymptoticallyLinear { alpha_lim: *a }
                } else {
                    GrowthClass::Bounded { sup: c + 1.0 }
                }
            }
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => {
                if *terminal_slope > 0.0 {
                    GrowthClass::AsymptoticallyLinear {
                        alpha_lim: *terminal_slope,
                    }
                } else {
                    let sup = knots
                        .iter()
                        .map(|&(_, v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    GrowthClass::Bounded { sup }
                }
            }
            RateKind::Constant { level } => GrowthClass::Bounded { sup: *level },
        }
    }

    /// Default search bound for [`RateFunction::find_fixed_points`]:
    /// `10·(λ(0)+1)/(1−α)` for asymptotically linear rates with `α < 1`
    /// (an `α`-Lipschitz rate has all fixed points below `β/(1−α)`), else 100.
    pub fn default_search_hi(&self) -> f64 {
        match self.classify_growth() {
            GrowthClass::AsymptoticallyLinear { alpha_lim } if alpha_lim < 1.0 => {
                10.0 * (self.value(0.0) + 1.0) / (1.0 - alpha_lim)
            }
            _ => 100.0,
        }
    }

    /// An analytic bound `B` with all fixed points provably `≤ B`, when one
    /// is available for the kind.
    fn fixed_point_upper_bound(&self) -> Option<f64> {
        let g = |x: f64| self.value(x) - x;
        match &self.kind {
            RateKind::Affine { alpha, beta } => {
                if *alpha < 1.0 {
                    Some(beta / (1.0 - alpha))
                } else if *alpha == 1.0 {
                    if *beta > 0.0 {
                        Some(0.0) // g ≡ β > 0: no solutions at all
                    } else {
                        None // identity map: solutions everywhere
                    }
                } else {
                    // β = 0: the origin is the only solution; otherwise
                    // g(x) = β + (α−1)x > 0 for every x ≥ 0.
                    Some(0.0)
                }
            }
            RateKind::Constant { level } => Some(*level),
            RateKind::SqrtShift => Some(concave_bound(&|x| g(x), &|x| self.slope(x) - 1.0)),
            RateKind::Power {
                alpha,
                exponent,
                shift,
            } => {
                if *exponent < 1.0 {
                    Some(concave_bound(&|x| g(x), &|x| self.slope(x) - 1.0))
                } else if *exponent == 1.0 {
                    // Affine with slope alpha, intercept alpha*shift.
                    if *alpha < 1.0 {
                        Some(alpha * shift / (1.0 - alpha))
                    } else {
                        Some(0.0) // slope ≥ 1: origin only, or nothing
                    }
                } else {
                    // g is convex: past the minimizer of g, once g > 0 it stays.
                    let m =
                        ((1.0 / (alpha * exponent)).powf(1.0 / (exponent - 1.0)) - shift).max(0.0);
                    if g(m) > 0.0 {
                        Some(0.0) // minimum positive: no solutions
                    } else {
                        let mut x = m.max(1.0);
                        while g(x) <= 0.0 && x < 1e12 {
                            x *= 2.0;
                        }
                        Some(x)
                    }
                }
            }
            RateKind::SineMix { a, c, .. } => {
                // λ(x) − x ≤ (a−1)x + c + 1 < 0 once x > (c+1)/(1−a).
                if *a < 1.0 {
                    Some((c + 1.0) / (1.0 - a))
                } else {
                    None
                }
            }
            RateKind::PiecewiseLinear { .. } => None, // handled exactly elsewhere
        }
    }

    /// Locates and classifies every solution of `x = λ(x)` on `[0, search_hi]`.
    ///
    /// Affine and piecewise-linear kinds are solved segment-exactly (identity
    /// segments are reported as [`StabilityClass::Interval`]); other kinds use
    /// a sign-change grid scan (4096 cells, doubling up to 2^20 until the
    /// crossing count stabilizes) refined by bisection/Newton to [`FP_TOL`].
    pub fn find_fixed_points(&self, search_hi: f64) -> Result<FixedPointReport, RateFnError> {
        if !(search_hi > 0.0) || !search_hi.is_finite() {
            return Err(RateFnError::InvalidSearchBound(search_hi));
        }
        match &self.kind {
            RateKind::PiecewiseLinear {
                knots,
                terminal_slope,
            } => Ok(self.piecewise_fixed_points(knots, *terminal_slope, search_hi)),
            RateKind::Affine { alpha, beta } => {
                Ok(self.affine_fixed_points(*alpha, *beta, search_hi))
            }
            _ => Ok(self.scan_fixed_points(search_hi)),
        }
    }

    fn affine_fixed_points(&self, alpha: f64, beta: f64, hi: f64) -> FixedPointReport {
        if alpha == 1.0 && beta == 0.0 {
            // λ(x) ≡ x: the whole half-line is fixed.
            return FixedPointReport {
                points: vec![FixedPointEntry {
                    location: 0.0,
                    slope: 1.0,
                    class: StabilityClass::Interval { lo: 0.0, hi },
                }],
                complete: false,
            };
        }
        let mut points = Vec::new();
        let mut complete = true;
        if alpha < 1.0 {
            let x = beta / (1.0 - alpha);
            if x <= hi {
                points.push(FixedPointEntry {
                    location: x,
                    slope: alpha,
                    class: StabilityClass::Stable,
                });
            } else {
                complete = false;
            }
        } else if beta == 0.0 {
            // α > 1: only the origin.
            points.push(FixedPointEntry {
                location: 0.0,
                slope: alpha,
                class: StabilityClass::Unstable,
            });
        }
        // α ≥ 1 with β > 0: λ(x) > x everywhere, provably no solutions.
        FixedPointReport { points, complete }
    }

    fn piecewise_fixed_points(
        &self,
        knots: &[(f64, f64)],
        terminal_slope: f64,
        hi: f64,
    ) -> FixedPointReport {
        // Solve the whole domain segment-exactly, then restrict to [0, hi].
        // Segment list: (x0, x1, value at x0, slope); terminal is open-ended.
        let mut segments: Vec<(f64, f64, f64, f64)> = Vec::new();
        for w in knots.windows(2) {
            let (x0, v0) = w[0];
            let (x1, v1) = w[1];
            segments.push((x0, x1, v0, (v1 - v0) / (x1 - x0)));
        }
        let &(xm, vm) = knots.last().unwrap();
        segments.push((xm, f64::INFINITY, vm, terminal_slope));

        // (lo, hi, is_interval); points carry lo == hi.
        let mut pieces: Vec<(f64, f64, bool)> = Vec::new();
        for &(x0, x1, v0, s) in &segments {
            let on_identity = (s - 1.0).abs() < IDENTITY_TOL && (v0 - x0).abs() < IDENTITY_TOL;
            if on_identity {
                pieces.push((x0, x1, true));
            } else if (s - 1.0).abs() >= IDENTITY_TOL {
                let xc = (v0 - s * x0) / (1.0 - s);
                if xc >= x0 - IDENTITY_TOL && xc < x1 {
                    pieces.push((xc.max(x0), xc.max(x0), false));
                }
            }
            // Parallel to y = x but off it: no crossing on this segment.
        }

        // Merge touching pieces (points at interval boundaries, knot duplicates).
        pieces.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64, bool)> = Vec::new();
        for (lo, phi, is_interval) in pieces {
            if let Some(last) = merged.last_mut() {
                if is_interval && last.2 && (lo - last.1).abs() < IDENTITY_TOL {
                    last.1 = phi;
                    continue;
                }
                if is_interval && !last.2 && (lo - last.0).abs() < IDENTITY_TOL {
                    *last = (lo, phi, true); // point on the interval start: absorb
                    continue;
                }
                if !is_interval && ((lo - last.1).abs() < IDENTITY_TOL || (last.2 && lo <= last.1))
                {
                    continue; // point on an interval end / duplicate knot crossing
                }
            }
            merged.push((lo, phi, is_interval));
        }

        let mut complete = true;
        let mut points = Vec::new();
        for (lo, phi, is_interval) in merged {
            if lo > hi {
                complete = false; // solutions provably exist past the bound
                continue;
            }
            if is_interval {
                if phi > hi {
                    complete = false;
                }
                points.push(FixedPointEntry {
                    location: lo,
                    slope: 1.0,
                    class: StabilityClass::Interval {
                        lo,
                        hi: phi.min(hi),
                    },
                });
            } else {
                points.push(self.classify_by_probe(lo));
            }
        }
        FixedPointReport { points, complete }
    }

    /// Two-sided drift probe; correct at knots where the one-sided slopes
    /// disagree (the recorded slope is the right derivative).
    fn classify_by_probe(&self, x: f64) -> FixedPointEntry {
        let g = |y: f64| self.value(y) - y;
        let attracts_left = x <= PROBE_DELTA || g(x - PROBE_DELTA) > 0.0;
        let attracts_right = g(x + PROBE_DELTA) < 0.0;
        let class = match (attracts_left, attracts_right) {
            (true, true) => StabilityClass::Stable,
            (false, false) => StabilityClass::Unstable,
            (true, false) => StabilityClass::SaddleLeftStable,
            (false, true) => StabilityClass::SaddleRightStable,
        };
        FixedPointEntry {
            location: x,
            slope: self.slope(x),
            class,
        }
    }

    fn scan_fixed_points(&self, hi: f64) -> FixedPointReport {
        let g = |x: f64| self.value(x) - x;
        // Double the grid until the sign-change census agrees twice in a row.
        let mut resolution = 4096usize;
        let mut brackets = scan_brackets(&g, hi, resolution);
        loop {
            if resolution >= 1 << 20 {
                break;
            }
            resolution *= 2;
            let next = scan_brackets(&g, hi, resolution);
            let stable_count = next.len() == brackets.len();
            brackets = next;
            if stable_count {
                break;
            }
        }
        let mut points: Vec<FixedPointEntry> = Vec::new();
        for (lo, bhi) in brackets {
            let x = roots::newton_bisect(g, |x| self.slope(x) - 1.0, lo, bhi, 1e-14, FP_TOL * 0.5);
            if points.iter().any(|p| (p.location - x).abs() < 1e-10) {
                continue;
            }
            points.push(self.classify_point(x));
        }
        points.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
        let complete = match self.fixed_point_upper_bound() {
            Some(bound) => hi >= bound,
            None => false,
        };
        FixedPointReport { points, complete }
    }

    fn classify_point(&self, x: f64) -> FixedPointEntry {
        let slope = self.slope(x);
        let class = if slope < 1.0 - CLASS_MARGIN {
            StabilityClass::Stable
        } else if slope > 1.0 + CLASS_MARGIN {
            StabilityClass::Unstable
        } else {
            // Marginal slope: probe the drift sign on both sides.
            let g = |y: f64| self.value(y) - y;
            let attracts_left = x <= PROBE_DELTA || g(x - PROBE_DELTA) > 0.0;
            let attracts_right = g(x + PROBE_DELTA) < 0.0;
            match (attracts_left, attracts_right) {
                (true, true) => StabilityClass::Stable,
                (false, false) => StabilityClass::Unstable,
                (true, false) => StabilityClass::SaddleLeftStable,
                (false, true) => StabilityClass::SaddleRightStable,
            }
        };
        FixedPointEntry {
            location: x,
            slope,
            class,
        }
    }
}

/// Upper bound for the solutions of a concave gap `g(x) = λ(x) − x`: doubles
/// until both the gap and its slope are negative; concavity then forbids any
/// return to zero.
fn concave_bound(g: &dyn Fn(f64) -> f64, dg: &dyn Fn(f64) -> f64) -> f64 {
    let mut x = 1.0;
    while (g(x) >= 0.0 || dg(x) >= 0.0) && x < 1e12 {
        x *= 2.0;
    }
    x
}

/// Sign-change brackets of `g` over a uniform grid on `[0, hi]`.
fn scan_brackets<F: Fn(f64) -> f64>(g: &F, hi: f64, cells: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut x_prev = 0.0;
    let mut g_prev = g(0.0);
    for i in 1..=cells {
        let x = hi * i as f64 / cells as f64;
        let gx = g(x);
        if g_prev == 0.0 {
            out.push((x_prev, x_prev));
        } else if g_prev.signum() != gx.signum() && gx != 0.0 {
            out.push((x_prev, x));
        }
        x_prev = x;
        g_prev = gx;
    }
    if g_prev == 0.0 {
        out.push((x_prev, x_prev));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_fp() -> f64 {
        (1.0 + 5.0f64.sqrt()) / 2.0
    }

    #[test]
    fn evaluate_known_values() {
        assert_eq!(RateFunction::sqrt_shift().evaluate(0.0).unwrap(), 1.0);
        let sm = RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap();
        assert_eq!(sm.evaluate(0.0).unwrap(), 0.5);
        let af = RateFunction::affine(0.5, 1.0).unwrap();
        assert_eq!(af.evaluate(4.0).unwrap(), 3.0);
    }

    #[test]
    fn evaluate_rejects_negative_argument() {
        let rf = RateFunction::sqrt_shift();
        assert!(matches!(
            rf.evaluate(-0.1),
            Err(RateFnError::NegativeArgument(_))
        ));
        assert!(matches!(
            rf.derivative(-1.0),
            Err(RateFnError::NegativeArgument(_))
        ));
    }

    #[test]
    fn derivative_known_values() {
        let af = RateFunction::affine(0.5, 1.0).unwrap();
        assert_eq!(af.derivative(7.3).unwrap(), 0.5);
        let rf = RateFunction::sqrt_shift();
        let x = sqrt_fp();
        let expected = 0.5 / (1.0 + x).sqrt();
        assert!((rf.derivative(x).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.30902).abs() < 1e-5);
        let sm = RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap();
        assert!((sm.derivative(0.0).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let rfs = [
            RateFunction::sqrt_shift(),
            RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap(),
            RateFunction::power(1.0, 2.0, 1.0).unwrap(),
            RateFunction::affine(0.3, 2.0).unwrap(),
        ];
        for rf in &rfs {
            for i in 0..100 {
                let x = 0.01 + 0.37 * i as f64;
                let a = rf.derivative(x).unwrap();
                let fd = rf.derivative_fd(x).unwrap();
                let denom = a.abs().max(1e-8);
                assert!(
                    ((a - fd) / denom).abs() < 1e-5,
                    "{:?} at x={x}: analytic {a} vs fd {fd}",
                    rf.kind()
                );
            }
        }
    }

    #[test]
    fn curvature_matches_finite_difference_of_slope() {
        let rfs = [
            RateFunction::sqrt_shift(),
            RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap(),
            RateFunction::power(1.3, 1.7, 0.5).unwrap(),
            RateFunction::affine(0.3, 2.0).unwrap(),
        ];
        for rf in &rfs {
            for i in 1..50 {
                let x = 0.1 * i as f64;
                let h = 1e-5;
                let fd = (rf.slope(x + h) - rf.slope(x - h)) / (2.0 * h);
                let an = rf.curvature(x);
                assert!(
                    (an - fd).abs() < 1e-5 * (1.0 + an.abs()),
                    "{:?} at x={x}: {an} vs {fd}",
                    rf.kind()
                );
            }
        }
    }

    #[test]
    fn sqrt_shift_has_single_stable_golden_ratio_point() {
        let rf = RateFunction::sqrt_shift();
        let rep = rf.find_fixed_points(10.0).unwrap();
        assert!(rep.complete);
        assert_eq!(rep.points.len(), 1);
        let p = &rep.points[0];
        assert!((p.location - sqrt_fp()).abs() < 1e-9, "got {}", p.location);
        assert_eq!(p.class, StabilityClass::Stable);
        let residual = (rf.value(p.location) - p.location).abs();
        assert!(residual <= FP_TOL, "residual {residual}");
    }

    #[test]
    fn sine_mix_has_three_points_stable_unstable_stable() {
        let rf = RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap();
        let rep = rf.find_fixed_points(20.0).unwrap();
        assert!(rep.complete);
        assert_eq!(rep.points.len(), 3, "points: {:?}", rep.points);
        let classes: Vec<_> = rep.points.iter().map(|p| p.class).collect();
        assert_eq!(
            classes,
            vec![
                StabilityClass::Stable,
                StabilityClass::Unstable,
                StabilityClass::Stable
            ]
        );
        for p in &rep.points {
            assert!((rf.value(p.location) - p.location).abs() <= FP_TOL);
        }
        // Ascending, alternating by construction of an increasing λ.
        assert!(rep.points[0].location < rep.points[1].location);
        assert!(rep.points[1].location < rep.points[2].location);
    }

    #[test]
    fn affine_fixed_point_solves_linear_equation() {
        let rf = RateFunction::affine(0.5, 1.0).unwrap();
        let rep = rf.find_fixed_points(10.0).unwrap();
        assert!(rep.complete);
        assert_eq!(rep.points.len(), 1);
        assert!((rep.points[0].location - 2.0).abs() < 1e-12);
        assert_eq!(rep.points[0].slope, 0.5);
        assert_eq!(rep.points[0].class, StabilityClass::Stable);
    }

    #[test]
    fn growth_classification_per_kind() {
        assert_eq!(
            RateFunction::affine(0.5, 1.0).unwrap().classify_growth(),
            GrowthClass::AsymptoticallyLinear { alpha_lim: 0.5 }
        );
        assert_eq!(
            RateFunction::power(1.0, 2.0, 1.0)
                .unwrap()
                .classify_growth(),
            GrowthClass::Superlinear { explosive: true }
        );
        assert_eq!(
            RateFunction::constant(3.0).unwrap().classify_growth(),
            GrowthClass::Bounded { sup: 3.0 }
        );
        assert_eq!(
            RateFunction::sqrt_shift().classify_growth(),
            GrowthClass::Sublinear {
                alpha: 1.0,
                beta_exp: 0.5
            }
        );
    }

    #[test]
    fn paper_piecewise_identity_segments_reported_as_intervals() {
        // λ: 1+0.5x, then y=x on [2,3], 1.5+0.5x, −4.5+2x, y=x on [4.5,5], 3.75+0.25x.
        let rf = RateFunction::piecewise_linear(
            vec![
                (0.0, 1.0),
                (2.0, 2.0),
                (3.0, 3.0),
                (4.0, 3.5),
                (4.5, 4.5),
                (5.0, 5.0),
            ],
            0.25,
        )
        .unwrap();
        let rep = rf.find_fixed_points(20.0).unwrap();
        assert!(rep.complete);
        assert_eq!(rep.points.len(), 2, "{:?}", rep.points);
        match rep.points[0].class {
            StabilityClass::Interval { lo, hi } => {
                assert!((lo - 2.0).abs() < 1e-9 && (hi - 3.0).abs() < 1e-9)
            }
            other => panic!("expected interval, got {other:?}"),
        }
        match rep.points[1].class {
            StabilityClass::Interval { lo, hi } => {
                assert!((lo - 4.5).abs() < 1e-9 && (hi - 5.0).abs() < 1e-9)
            }
            other => panic!("expected interval, got {other:?}"),
        }
    }

    #[test]
    fn paper_piecewise_saddles_classified() {
        // λ: 1+0.5x, −2+2x, 2.5+0.5x, −6.5+2x, 3.25+0.5x: stable at 5,
        // saddles at 2 (left-stable) and 6.5 (right-stable).
        let rf = RateFunction::piecewise_linear(
            vec![(0.0, 1.0), (2.0, 2.0), (3.0, 4.0), (6.0, 5.5), (6.5, 6.5)],
            0.5,
        )
        .unwrap();
        let rep = rf.find_fixed_points(20.0).unwrap();
        assert_eq!(rep.points.len(), 3, "{:?}", rep.points);
        assert!((rep.points[0].location - 2.0).abs() < 1e-9);
        assert_eq!(rep.points[0].class, StabilityClass::SaddleLeftStable);
        assert!((rep.points[1].location - 5.0).abs() < 1e-9);
        assert_eq!(rep.points[1].class, StabilityClass::Stable);
        assert!((rep.points[2].location - 6.5).abs() < 1e-9);
        assert_eq!(rep.points[2].class, StabilityClass::SaddleRightStable);
    }

    #[test]
    fn incomplete_when_bound_too_small() {
        let rf = RateFunction::affine(0.5, 1.0).unwrap();
        let rep = rf.find_fixed_points(1.0).unwrap();
        assert!(!rep.complete);
        assert!(rep.points.is_empty());
    }

    #[test]
    fn superlinear_power_has_no_fixed_points_and_is_complete() {
        let rf = RateFunction::power(1.0, 2.0, 1.0).unwrap();
        let rep = rf.find_fixed_points(50.0).unwrap();
        assert!(rep.points.is_empty(), "{:?}", rep.points);
        assert!(rep.complete);
    }

    #[test]
    fn constructor_rejects_invalid_parameters() {
        assert!(RateFunction::affine(-0.1, 1.0).is_err());
        assert!(RateFunction::power(1.0, -2.0, 0.0).is_err());
        assert!(RateFunction::constant(-3.0).is_err());
        // Dips negative near the origin.
        assert!(RateFunction::sine_mix(0.2, 3.0, 0.0).is_err());
        // Knots not strictly increasing.
        assert!(RateFunction::piecewise_linear(vec![(0.0, 1.0), (0.0, 2.0)], 1.0).is_err());
        // First knot must sit at the origin.
        assert!(RateFunction::piecewise_linear(vec![(1.0, 1.0), (2.0, 2.0)], 1.0).is_err());
    }

    #[test]
    fn monotone_kinds_are_nondecreasing_at_random_points() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let rfs = [
            RateFunction::affine(0.5, 1.0).unwrap(),
            RateFunction::power(1.3, 0.7, 0.2).unwrap(),
            RateFunction::sqrt_shift(),
            RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap(),
            RateFunction::piecewise_linear(vec![(0.0, 1.0), (2.0, 2.0), (3.0, 4.0)], 0.5).unwrap(),
            RateFunction::constant(3.0).unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for rf in &rfs {
            assert!(rf.is_monotone());
            for _ in 0..1000 {
                let x = rng.random::<f64>() * 50.0;
                let dx = rng.random::<f64>() * 5.0;
                let (lo, hi) = (rf.value(x), rf.value(x + dx));
                assert!(
                    hi >= lo - 1e-12 * (1.0 + lo.abs()),
                    "{:?} decreases between {x} and {}",
                    rf.kind(),
                    x + dx
                );
            }
        }
    }

    #[test]
    fn monotone_flag_reflects_kind() {
        assert!(RateFunction::sqrt_shift().is_monotone());
        assert!(RateFunction::sine_mix(0.9, 0.6, 0.5).unwrap().is_monotone());
        // a < b: the derivative dips negative but the function stays positive.
        let wiggly = RateFunction::sine_mix(0.5, 0.9, 2.0).unwrap();
        assert!(!wiggly.is_monotone());
    }

    #[test]
    fn serde_round_trip_matches_config_contract() {
        let rf: RateFunction =
            serde_json::from_str(r#"{"kind":"affine","alpha":0.5,"beta":1.0}"#).unwrap();
        assert_eq!(
            rf.kind(),
            &RateKind::Affine {
                alpha: 0.5,
                beta: 1.0
            }
        );
        let rf: RateFunction = serde_json::from_str(
            r#"{"kind":"piecewise_linear","knots":[[0,1],[2,2],[3,3],[4,3.5]],"terminal_slope":0.25}"#,
        )
        .unwrap();
        let json = serde_json::to_string(&rf).unwrap();
        assert!(json.contains("piecewise_linear"));
        // Invalid parameters must fail at deserialization time.
        assert!(
            serde_json::from_str::<RateFunction>(r#"{"kind":"affine","alpha":-1,"beta":1}"#)
                .is_err()
        );
    }
}
