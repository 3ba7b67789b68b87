//! Simulation and verification toolkit for a self-exciting point process whose
//! intensity at time `t` is `λ((N_{t-} + γ)/(t + 1))` for a nondecreasing rate
//! function `λ`.
//!
//! The crate is organized around five subsystems:
//!
//! - [`rate_fn`] — the rate function `λ(·)`, its derivative, growth regime, and
//!   the fixed points of `x = λ(x)` with stability classification.
//! - [`sim`] — exact event sampling (compensator inversion for affine rates,
//!   decreasing-bound thinning for general monotone rates) with explosion guards.
//! - [`analytic`] — closed-form moments and covariances for linear rates, the
//!   negative-binomial marginal law, the Kolmogorov forward pmf ladder, tail
//!   asymptotes, and the deterministic mean-field flow.
//! - [`ldp`] — the sample-path large-deviations rate functional, its scalar
//!   contraction by path minimization, and Euler–Lagrange diagnostics.
//! - [`mc`] — declarative, reproducible, parallel Monte Carlo experiments that
//!   check the limit theorems (LLN, CLT, gamma scaling, basins, L² rates,
//!   fluid limits, tails, explosion fractions) at desk scale.

// Guards are written `!(x >= 0.0)` on purpose: the negation rejects NaN,
// which `x < 0.0` silently admits.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod ldp;
pub mod mc;
pub mod numerics;
pub mod rate_fn;
pub mod sim;
