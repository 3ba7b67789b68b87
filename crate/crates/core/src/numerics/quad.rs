//! Quadrature: adaptive Gauss–Kronrod (G7/K15) for smooth integrands and a
//! fixed Gauss–Legendre rule used per path segment by the rate functional.

use std::sync::OnceLock;

// QUADPACK G7/K15 abscissae (positive half) and weights.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let fsum = f(mid - dx) + f(mid + dx);
        kronrod += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `abs_tol` (bisects the worst interval until the summed error
/// estimate is below tolerance).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // (neg error, a, b, value, error) — explicit stack, worst-first.
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total_err: f64 = e;
    for _ in 0..10_000 {
        if total_err <= abs_tol {
            break;
        }
        // Split the interval with the largest error.
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (ia, ib, _, ie) = intervals.swap_remove(idx);
        total_err -= ie;
        let im = 0.5 * (ia + ib);
        for (la, lb) in [(ia, im), (im, ib)] {
            let (lv, le) = gk15(&f, la, lb);
            total_err += le;
            intervals.push((la, lb, lv, le));
        }
    }
    intervals.iter().map(|t| t.2).sum()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// The 32-point Gauss–Legendre rule, cached.
pub fn gauss_legendre_32() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_exp() {
        let v = integrate(|x| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn gk_adaptive_handles_peak() {
        // Narrow Gaussian bump, integral ≈ sqrt(pi)*0.01 over the real line.
        let v = integrate(|x| (-((x - 0.3) / 0.01).powi(2)).exp(), 0.0, 1.0, 1e-13);
        assert!((v - std::f64::consts::PI.sqrt() * 0.01).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_32_is_exact_on_high_degree_polynomials() {
        let (x, w) = gauss_legendre_32();
        // Exact for polynomials up to degree 63: check x^62 on [-1,1].
        let q: f64 = x.iter().zip(w).map(|(xi, wi)| wi * xi.powi(62)).sum();
        assert!((q - 2.0 / 63.0).abs() < 1e-13, "got {q}");
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }
}
