//! Adaptive Dormand–Prince RK5(4) integrator for small ODE systems.
//!
//! The 5th-order solution advances the state; the embedded 4th-order
//! difference drives the step controller. Steps land exactly on the
//! requested checkpoints so no dense output is needed.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t={t} (h={h}); system too stiff for this integrator")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted after {0} steps")]
    TooManySteps(usize),
    #[error("non-finite state at t={0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

/// Integrates `dy/dt = rhs(t, y)` from `t0`, reporting the state at each of
/// the strictly increasing `checkpoints` (all ≥ `t0`).
pub fn integrate_checkpoints<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    checkpoints: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(checkpoints.len());

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    // k[0] always holds rhs at the current (t, y); FSAL keeps it fresh.
    rhs(t, &y, &mut k[0]);

    let mut steps = 0usize;
    for &cp in checkpoints {
        debug_assert!(cp >= t);
        if cp == t {
            out.push(y.clone());
            continue;
        }
        // Initial step guess: conservative fraction of the remaining span.
        let mut h = ((cp - t) * 1e-3).min(cp - t).max(f64::MIN_POSITIVE);
        while t < cp {
            steps += 1;
            if steps > opts.max_steps {
                return Err(OdeError::TooManySteps(opts.max_steps));
            }
            h = h.min(cp - t);
            if h <= t.abs() * f64::EPSILON {
                return Err(OdeError::StepUnderflow { t, h });
            }
            // Stages 2..=6.
            let stage_coeffs: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (s, coeffs) in stage_coeffs.iter().enumerate() {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, &c) in coeffs.iter().enumerate() {
                        acc += c * k[j][i];
                    }
                    ytmp[i] = y[i] + h * acc;
                }
                rhs(t + C[s] * h, &ytmp, &mut k[s + 1]);
            }
            // 5th-order proposal and its derivative (FSAL stage 7).
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, &b) in B5.iter().enumerate() {
                    acc += b * k[j][i];
                }
                ynew[i] = y[i] + h * acc;
            }
            rhs(t + h, &ynew, &mut k[6]);
            // Scaled RMS of the embedded error.
            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for j in 0..7 {
                    e += (B5.get(j).copied().unwrap_or(0.0) - B4[j]) * k[j][i];
                }
                e *= h;
                let scale = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / dim as f64).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFinite(t));
            }
            if err <= 1.0 {
                t += h;
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6); // FSAL
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h *= grow;
            } else {
                // k[0] still matches the unchanged (t, y).
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_exact_to_tolerance() {
        let opts = OdeOptions {
            rtol: 1e-11,
            atol: 1e-13,
            ..Default::default()
        };
        let cps = [0.5, 1.0, 3.0];
        let sol =
            integrate_checkpoints(|_t, y, dy| dy[0] = -y[0], 0.0, &[1.0], &cps, &opts).unwrap();
        for (y, t) in sol.iter().zip(cps) {
            assert!(
                (y[0] - (-t).exp()).abs() < 1e-10,
                "t={t}: {} vs {}",
                y[0],
                (-t).exp()
            );
        }
    }

    #[test]
    fn coupled_oscillator_conserves_energy() {
        let opts = OdeOptions::default();
        let sol = integrate_checkpoints(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &[20.0 * std::f64::consts::PI],
            &opts,
        )
        .unwrap();
        assert!((sol[0][0] - 1.0).abs() < 1e-7);
        assert!(sol[0][1].abs() < 1e-7);
    }

    #[test]
    fn checkpoint_equal_to_start_returns_initial_state() {
        let opts = OdeOptions::default();
        let sol = integrate_checkpoints(|_t, _y, dy| dy[0] = 1.0, 2.0, &[7.0], &[2.0, 3.0], &opts)
            .unwrap();
        assert_eq!(sol[0][0], 7.0);
        assert!((sol[1][0] - 8.0).abs() < 1e-12);
    }
}
