//! Order statistics and test statistics for the Monte Carlo harness.
//!
//! Reductions here are deterministic functions of their input slices, so
//! experiment reports do not depend on worker count or scheduling.

/// Pairwise (cascade) summation; bounded rounding error independent of the
/// summation schedule used to produce the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance (n−1 denominator) via a two-pass pairwise reduction.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the sample variance, using the empirical fourth central
/// moment: Var(s²) ≈ (m₄ − σ⁴(n−3)/(n−1)) / n.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m4s: Vec<f64> = xs.iter().map(|&x| (x - m).powi(4)).collect();
    let m4 = pairwise_sum(&m4s) / n;
    let s2 = sample_variance(xs);
    ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Sample covariance (n−1 denominator) and its standard error by the delta
/// method with empirical mixed moments.
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - mx) * (y - my))
        .collect();
    let cov = pairwise_sum(&prods) / (n - 1.0);
    let sq: Vec<f64> = prods.iter().map(|&p| (p - cov) * (p - cov)).collect();
    let var_of_prod = pairwise_sum(&sq) / (n - 1.0);
    (cov, (var_of_prod / n).sqrt())
}

/// Empirical quantile by linear interpolation on the sorted copy.
pub fn quantiles(xs: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs.iter()
        .map(|&q| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        })
        .collect()
}

pub fn median(xs: &[f64]) -> f64 {
    quantiles(xs, &[0.5])[0]
}

/// One-sample Kolmogorov–Smirnov distance between the empirical law of `xs`
/// and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic Kolmogorov survival function Q(x) = 2 Σ (−1)^{k−1} e^{−2k²x²};
/// the p-value of the two-sample KS statistic is `Q(D·√(nm/(n+m)))`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_two_sample_p_value(xs: &[f64], ys: &[f64]) -> f64 {
    let d = ks_two_sample(xs, ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    kolmogorov_q(d * (n * m / (n + m)).sqrt())
}

/// Pool-adjacent-violators: least-squares fit of a nonincreasing sequence.
pub fn pava_nonincreasing(xs: &[f64]) -> Vec<f64> {
    // Fit a nondecreasing sequence to the negated data, then negate back.
    let neg: Vec<f64> = xs.iter().map(|&x| -x).collect();
    pava_nondecreasing(&neg).into_iter().map(|x| -x).collect()
}

/// Pool-adjacent-violators: least-squares fit of a nondecreasing sequence.
pub fn pava_nondecreasing(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &x in xs {
        level.push(x);
        weight.push(1.0);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l1, w1) = (level.pop().unwrap(), weight.pop().unwrap());
            let (l0, w0) = (level.pop().unwrap(), weight.pop().unwrap());
            level.push((l0 * w0 + l1 * w1) / (w0 + w1));
            weight.push(w0 + w1);
        }
    }
    let mut out = Vec::with_capacity(n);
    for (l, w) in level.iter().zip(&weight) {
        for _ in 0..*w as usize {
            out.push(*l);
        }
    }
    out
}

/// log(Σ exp(xs)) guarded against overflow; −∞ for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 5050.0);
    }

    #[test]
    fn variance_of_known_sample() {
        // [2,4,6,8,10]: mean 6, sample variance 10.
        let xs = [2.0, 4.0, 6.0, 8.0, 10.0];
        assert!((sample_variance(&xs) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ks_distance_of_uniform_sample_is_small() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) < 1e-3);
    }

    #[test]
    fn kolmogorov_q_known_values() {
        // Q(1.36) ≈ 0.049, the classic 5% critical point.
        assert!((kolmogorov_q(1.36) - 0.0491).abs() < 5e-4);
        assert!(kolmogorov_q(0.0) == 1.0);
    }

    #[test]
    fn pava_pools_violators() {
        let fit = pava_nondecreasing(&[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(fit, vec![1.0, 2.5, 2.5, 4.0]);
        let fit = pava_nonincreasing(&[4.0, 2.0, 3.0, 1.0]);
        assert_eq!(fit, vec![4.0, 2.5, 2.5, 1.0]);
    }

    #[test]
    fn log_sum_exp_handles_large_negatives() {
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ols_slope_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 3.0 - 2.0 * v).collect();
        assert!((ols_slope(&x, &y) + 2.0).abs() < 1e-12);
    }
}
