//! Proximal maps and Moreau envelopes.
//!
//! For `β > 0` the envelope `g^β(x) = min_y g(y) + ‖x - y‖² / (2β)` is attained
//! at `y = prox_{βg}(x)` and has the `1/β`-Lipschitz gradient
//! `(x - prox_{βg}(x)) / β`.

use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error, PartialEq)]
pub enum ProxError {
    #[error("proximal map returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("function value is not available for this proximal term")]
    MissingValue,
    #[error("smoothing parameter must be positive, got {0}")]
    NonPositiveBeta(f64),
}

/// A convex function accessed through its proximal map.
pub trait Prox: Send + Sync {
    /// `prox_{βg}(x)`.
    fn prox(&self, x: &Vector, beta: f64) -> Vector;

    /// `g(x)`, when available.
    fn value(&self, _x: &Vector) -> Option<f64> {
        None
    }
}

/// `g ≡ 0`: the proximal map is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

pub fn identity_prox() -> Zero {
    Zero
}

impl Prox for Zero {
    fn prox(&self, x: &Vector, _beta: f64) -> Vector {
        x.clone()
    }

    fn value(&self, _x: &Vector) -> Option<f64> {
        Some(0.0)
    }
}

/// `g(x) = weight·‖x‖₁`, with soft-thresholding as its proximal map.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Self {
        Self { weight }
    }

    /// Minimal-norm element of `∂g(x)`.
    pub fn min_norm_subgradient(&self, x: &Vector) -> Vector {
        x.map(|v| if v > 0.0 { self.weight } else if v < 0.0 { -self.weight } else { 0.0 })
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl Prox for L1Norm {
    fn prox(&self, x: &Vector, beta: f64) -> Vector {
        let t = beta * self.weight;
        x.map(|v| soft_threshold(v, t))
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(self.weight * x.lp_norm(1))
    }
}

/// `g(x) = (weight/2)·‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredL2 {
    pub weight: f64,
}

impl SquaredL2 {
    pub fn new(weight: f64) -> Self {
        Self { weight }
    }
}

impl Prox for SquaredL2 {
    fn prox(&self, x: &Vector, beta: f64) -> Vector {
        x / (1.0 + beta * self.weight)
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * self.weight * x.norm_squared())
    }
}

fn checked_prox(p: &dyn Prox, x: &Vector, beta: f64) -> Result<Vector, ProxError> {
    if !(beta > 0.0) {
        return Err(ProxError::NonPositiveBeta(beta));
    }
    let y = p.prox(x, beta);
    if y.len() != x.len() {
        return Err(ProxError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(y)
}

/// `∇g^β(x) = (x - prox_{βg}(x)) / β`.
pub fn moreau_gradient(p: &dyn Prox, x: &Vector, beta: f64) -> Result<Vector, ProxError> {
    let y = checked_prox(p, x, beta)?;
    Ok((x - y) / beta)
}

/// `g^β(x) = g(prox_{βg}(x)) + ‖x - prox_{βg}(x)‖² / (2β)`.
pub fn moreau_value(p: &dyn Prox, x: &Vector, beta: f64) -> Result<f64, ProxError> {
    let y = checked_prox(p, x, beta)?;
    let gy = p.value(&y).ok_or(ProxError::MissingValue)?;
    Ok(gy + (x - &y).norm_squared() / (2.0 * beta))
}
