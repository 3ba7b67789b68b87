//! Scalar root finding on a bracket: bisection with a Newton accelerator.

/// Refines a root of `f` inside `[lo, hi]` (which must bracket a sign change)
/// until the bracket width falls below `xtol` or `|f|` falls below `ftol`.
///
/// Newton steps (using `df`) are taken when they stay inside the current
/// bracket; otherwise the step falls back to bisection, so convergence is
/// guaranteed for any continuous `f` with `f(lo)·f(hi) ≤ 0`.
pub fn newton_bisect<F, D>(f: F, df: D, lo: f64, hi: f64, xtol: f64, ftol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(
        flo.signum() != fhi.signum(),
        "newton_bisect requires a bracket: f({lo})={flo}, f({hi})={fhi}"
    );
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= ftol {
            return x;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        if hi - lo <= xtol {
            return 0.5 * (lo + hi);
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    0.5 * (lo + hi)
}

/// Pure bisection to `xtol`; used where no cheap derivative exists.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
