//! Conditional gradient with augmented Lagrangian and proximal step, with
//! inexact and stochastic gradient oracles.
//!
//! The crate solves affinely constrained composite problems
//!
//! ```text
//! minimize   f(x) + g(T x) + h(x)
//! subject to A x = b
//! ```
//!
//! where `f` is smooth and reached only through a (possibly inexact)
//! [`oracles::GradientOracle`], `g` through its proximal map
//! ([`proximal::Prox`]) and `h` through a linear minimization oracle over its
//! compact domain ([`lmo::Lmo`]).
//!
//! Module map:
//!
//! - [`schedules`]: open-loop parameter sequences and their validation.
//! - [`proximal`]: proximal maps and Moreau envelopes.
//! - [`lmo`]: linear minimization oracles, exact and tolerance-perturbed.
//! - [`oracles`]: exact, growing-batch, stochastic-averaging and sweeping
//!   gradient oracles for finite sums.
//! - [`solver`]: the main iteration and ergodic averaging.
//! - [`baseline`]: high-precision reference solutions of the projection problem.
//! - [`diagnostics`]: trace records, CSV traces and rate slopes.
//! - [`config`] and [`experiment`]: run configuration and the comparison driver.

pub mod baseline;
pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod lmo;
pub mod oracles;
pub mod proximal;
pub mod schedules;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};

/// Dense column vector used for every primal and dual quantity.
pub type Vector = DVector<f64>;
/// Dense matrix used for `A` and `T`.
pub type Matrix = DMatrix<f64>;
