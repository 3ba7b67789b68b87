//! Shared numerical kernels: root bracketing, adaptive quadrature, an adaptive
//! Runge–Kutta integrator, and order statistics / test statistics used by the
//! Monte Carlo harness.

pub mod ode;
pub mod quad;
pub mod roots;
pub mod stats;
