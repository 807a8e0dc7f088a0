//! Reference solutions of the projection problem
//!
//! ```text
//! minimize ½‖x - y‖²  subject to  ‖x‖₁ ≤ r,  A x = b
//! ```
//!
//! computed with Dykstra's alternating projections, plus a KKT certificate
//! that also yields a multiplier estimate for `A x = b`.

use nalgebra::Cholesky;
use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("A does not have full row rank")]
    RankDeficient,
    #[error("dimension mismatch: A is {rows}x{cols}, b has {b_len}, y has {y_len}")]
    Dimension { rows: usize, cols: usize, b_len: usize, y_len: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub x_star: Vector,
    pub iterations: usize,
    /// `max(‖x - P_ball(x)‖, ‖Ax - b‖)` at exit.
    pub residual: f64,
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}` by sorting magnitudes.
pub fn project_l1_ball(y: &Vector, radius: f64) -> Vector {
    if y.lp_norm(1) <= radius {
        return y.clone();
    }
    let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u > t {
            threshold = t;
        } else {
            break;
        }
    }
    y.map(|v| v.signum() * (v.abs() - threshold).max(0.0))
}

/// Projector onto `{x : A x = b}` with a cached factorization of `A Aᵀ`.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    a: Matrix,
    b: Vector,
    gram: Cholesky<f64, nalgebra::Dyn>,
}

impl AffineProjector {
    pub fn new(a: &Matrix, b: &Vector) -> Result<Self, BaselineError> {
        if a.nrows() != b.len() {
            return Err(BaselineError::Dimension { rows: a.nrows(), cols: a.ncols(), b_len: b.len(), y_len: a.ncols() });
        }
        let sv = a.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if a.nrows() > a.ncols() || !(lo > 1e-12 * hi.max(1.0)) {
            return Err(BaselineError::RankDeficient);
        }
        let gram = Cholesky::new(a * a.transpose()).ok_or(BaselineError::RankDeficient)?;
        Ok(Self { a: a.clone(), b: b.clone(), gram })
    }

    /// `y - Aᵀ (A Aᵀ)⁻¹ (A y - b)`.
    pub fn project(&self, y: &Vector) -> Vector {
        let r = &self.a * y - &self.b;
        y - self.a.tr_mul(&self.gram.solve(&r))
    }
}

pub fn project_affine(y: &Vector, a: &Matrix, b: &Vector) -> Result<Vector, BaselineError> {
    if a.ncols() != y.len() {
        return Err(BaselineError::Dimension { rows: a.nrows(), cols: a.ncols(), b_len: b.len(), y_len: y.len() });
    }
    Ok(AffineProjector::new(a, b)?.project(y))
}

fn residual(x: &Vector, a: &Matrix, b: &Vector, radius: f64) -> f64 {
    let ball = (x - project_l1_ball(x, radius)).norm();
    let affine = (a * x - b).norm();
    ball.max(affine)
}

/// Dykstra's alternating projections onto the ℓ1 ball and the affine set.
///
/// Stops once the feasibility residual and the change in the iterate and in
/// both correction terms are all at most `tol`. The iterate alone can stall
/// for a step while the corrections are still moving.
pub fn dykstra(
    y: &Vector,
    a: &Matrix,
    b: &Vector,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BaselineResult, BaselineError> {
    if a.ncols() != y.len() {
        return Err(BaselineError::Dimension { rows: a.nrows(), cols: a.ncols(), b_len: b.len(), y_len: y.len() });
    }
    let affine = AffineProjector::new(a, b)?;
    let n = y.len();
    let mut x = y.clone();
    let mut p = Vector::zeros(n);
    let mut q = Vector::zeros(n);
    let mut res = residual(&x, a, b, radius);
    for it in 1..=max_iter {
        let u = project_l1_ball(&(&x + &p), radius);
        let p_next = &p + &x - &u;
        let shifted = &u + &q;
        let x_next = affine.project(&shifted);
        let q_next = shifted - &x_next;
        let change = (&x_next - &x).amax().max((&p_next - &p).amax()).max((&q_next - &q).amax());
        (x, p, q) = (x_next, p_next, q_next);
        res = residual(&x, a, b, radius);
        if res <= tol && change <= tol {
            return Ok(BaselineResult { x_star: x, iterations: it, residual: res });
        }
    }
    Err(BaselineError::NotConverged { iterations: max_iter, residual: res })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    /// Multiplier of `A x = b` for the objective `½‖x - y‖²`.
    pub mu: Vector,
    /// Multiplier of the ball constraint.
    pub ball_multiplier: f64,
    /// `‖x* - P_ball(y - Aᵀμ)‖∞`.
    pub residual: f64,
}

/// Recovers multipliers for a candidate solution by least squares on the
/// stationarity conditions over the support of `x_star`, then measures how
/// well `x* = P_ball(y - Aᵀμ)` holds.
pub fn kkt_certificate(y: &Vector, a: &Matrix, radius: f64, x_star: &Vector) -> KktCertificate {
    let m = a.nrows();
    let scale = x_star.amax().max(1.0);
    let on_boundary = x_star.lp_norm(1) >= radius * (1.0 - 1e-9);
    let rows: Vec<usize> = if on_boundary {
        (0..x_star.len()).filter(|&i| x_star[i].abs() > 1e-10 * scale).collect()
    } else {
        (0..x_star.len()).collect()
    };
    let cols = if on_boundary { m + 1 } else { m };
    let mut lhs = Matrix::zeros(rows.len(), cols);
    let mut rhs = Vector::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..m {
            lhs[(r, j)] = a[(j, i)];
        }
        if on_boundary {
            lhs[(r, m)] = x_star[i].signum();
        }
        rhs[r] = y[i] - x_star[i];
    }
    let sol = if rows.is_empty() {
        Vector::zeros(cols)
    } else {
        lhs.svd(true, true).solve(&rhs, 1e-13).unwrap_or_else(|_| Vector::zeros(cols))
    };
    let mu = sol.rows(0, m).into_owned();
    let ball_multiplier = if on_boundary { sol[m] } else { 0.0 };
    let recon = project_l1_ball(&(y - a.tr_mul(&mu)), radius);
    KktCertificate { mu, ball_multiplier, residual: (x_star - recon).amax() }
}
