//! Linear minimization oracles over the compact domain `C = dom(h)`.
//!
//! Every built-in set is a polytope and `h` is its indicator, so `minimize`
//! returns a vertex. Ties are broken towards the lowest index and `sign(0)`
//! is taken as `+1`, which keeps traces reproducible.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Vector;

pub trait Lmo: Send + Sync {
    fn dim(&self) -> usize;

    /// A point of `argmin_s h(s) + ⟨z, s⟩`.
    fn minimize(&self, z: &Vector) -> Vector;

    /// `h(s)` for `s ∈ C`; zero for indicator functions.
    fn h_value(&self, _s: &Vector) -> f64 {
        0.0
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool;

    /// Diameter `d_C`.
    fn diameter(&self) -> f64;

    /// Radius of a centered ball containing `C`.
    fn radius(&self) -> f64;

    /// Uniformly random vertex.
    fn random_vertex(&self, rng: &mut dyn RngCore) -> Vector;

    /// All vertices. Exponential for boxes; meant for small dimensions.
    fn vertices(&self) -> Vec<Vector>;
}

/// `{s : ‖s‖₁ ≤ scale}`.
#[derive(Debug, Clone)]
pub struct L1Ball {
    pub dim: usize,
    pub scale: f64,
}

pub fn l1_ball_lmo(dim: usize, scale: f64) -> L1Ball {
    L1Ball { dim, scale }
}

/// Index of the largest `|z_i|`, lowest index on ties.
fn argmax_abs(z: &Vector) -> usize {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, v) in z.iter().enumerate() {
        if v.abs() > best_abs {
            best = i;
            best_abs = v.abs();
        }
    }
    best
}

impl Lmo for L1Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    fn minimize(&self, z: &Vector) -> Vector {
        let mut s = Vector::zeros(self.dim);
        if self.dim == 0 {
            return s;
        }
        let i = argmax_abs(z);
        let sign = if z[i] < 0.0 { -1.0 } else { 1.0 };
        s[i] = -self.scale * sign;
        s
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim && x.lp_norm(1) <= self.scale + tol
    }

    fn diameter(&self) -> f64 {
        2.0 * self.scale
    }

    fn radius(&self) -> f64 {
        self.scale
    }

    fn random_vertex(&self, rng: &mut dyn RngCore) -> Vector {
        let mut s = Vector::zeros(self.dim);
        let j = rng.random_range(0..2 * self.dim);
        s[j / 2] = if j % 2 == 0 { self.scale } else { -self.scale };
        s
    }

    fn vertices(&self) -> Vec<Vector> {
        (0..self.dim)
            .flat_map(|i| {
                [1.0, -1.0].map(|sign| {
                    let mut s = Vector::zeros(self.dim);
                    s[i] = sign * self.scale;
                    s
                })
            })
            .collect()
    }
}

/// Unit simplex `{s ≥ 0 : Σ s_i = 1}`.
#[derive(Debug, Clone)]
pub struct Simplex {
    pub dim: usize,
}

impl Lmo for Simplex {
    fn dim(&self) -> usize {
        self.dim
    }

    fn minimize(&self, z: &Vector) -> Vector {
        let mut s = Vector::zeros(self.dim);
        if self.dim == 0 {
            return s;
        }
        let mut best = 0;
        for i in 1..self.dim {
            if z[i] < z[best] {
                best = i;
            }
        }
        s[best] = 1.0;
        s
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim && x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol
    }

    fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    fn radius(&self) -> f64 {
        1.0
    }

    fn random_vertex(&self, rng: &mut dyn RngCore) -> Vector {
        let mut s = Vector::zeros(self.dim);
        s[rng.random_range(0..self.dim)] = 1.0;
        s
    }

    fn vertices(&self) -> Vec<Vector> {
        (0..self.dim)
            .map(|i| {
                let mut s = Vector::zeros(self.dim);
                s[i] = 1.0;
                s
            })
            .collect()
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone)]
pub struct BoxSet {
    pub lower: Vector,
    pub upper: Vector,
}

impl Lmo for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn minimize(&self, z: &Vector) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if z[i] < 0.0 { self.upper[i] } else { self.lower[i] }),
        )
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    fn radius(&self) -> f64 {
        self.lower.zip_map(&self.upper, |l, u| l.abs().max(u.abs())).norm()
    }

    fn random_vertex(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if rng.random::<bool>() { self.upper[i] } else { self.lower[i] }),
        )
    }

    fn vertices(&self) -> Vec<Vector> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                Vector::from_iterator(
                    d,
                    (0..d).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }),
                )
            })
            .collect()
    }
}

type Tolerance = Box<dyn Fn(usize) -> f64 + Send + Sync>;

/// Inexact oracle returning a point whose linear objective is within `ε_k`
/// of the exact minimum.
///
/// With probability ½ the exact vertex is returned; otherwise the exact
/// vertex is moved towards a uniformly random vertex as far as the tolerance
/// allows.
pub struct PerturbedLmo {
    base: Box<dyn Lmo>,
    tolerance: Tolerance,
    rng: ChaCha8Rng,
}

pub fn perturbed_lmo(
    base: Box<dyn Lmo>,
    tolerance: impl Fn(usize) -> f64 + Send + Sync + 'static,
    seed: u64,
) -> PerturbedLmo {
    PerturbedLmo { base, tolerance: Box::new(tolerance), rng: ChaCha8Rng::seed_from_u64(seed) }
}

impl PerturbedLmo {
    pub fn base(&self) -> &dyn Lmo {
        self.base.as_ref()
    }

    pub fn tolerance(&self, k: usize) -> f64 {
        (self.tolerance)(k)
    }

    pub fn select(&mut self, z: &Vector, k: usize) -> Vector {
        let exact = self.base.minimize(z);
        let eps = (self.tolerance)(k).max(0.0);
        let coin: bool = self.rng.random();
        let vertex = self.base.random_vertex(&mut self.rng);
        if coin || eps == 0.0 {
            return exact;
        }
        let h = |s: &Vector| self.base.h_value(s);
        let gap = z.dot(&(&vertex - &exact)) + h(&vertex) - h(&exact);
        let lambda = if gap <= 0.0 || eps.is_infinite() { 1.0 } else { (eps / gap).min(1.0) };
        &exact * (1.0 - lambda) + &vertex * lambda
    }
}

/// The `ŝ_k` step: exact or tolerance-perturbed.
pub enum DirectionOracle {
    Exact(Box<dyn Lmo>),
    Perturbed(PerturbedLmo),
}

impl DirectionOracle {
    pub fn lmo(&self) -> &dyn Lmo {
        match self {
            DirectionOracle::Exact(l) => l.as_ref(),
            DirectionOracle::Perturbed(p) => p.base(),
        }
    }

    pub fn select(&mut self, z: &Vector, k: usize) -> Vector {
        match self {
            DirectionOracle::Exact(l) => l.minimize(z),
            DirectionOracle::Perturbed(p) => p.select(z, k),
        }
    }
}

impl<L: Lmo + 'static> From<L> for DirectionOracle {
    fn from(lmo: L) -> Self {
        DirectionOracle::Exact(Box::new(lmo))
    }
}
