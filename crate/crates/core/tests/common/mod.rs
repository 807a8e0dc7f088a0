//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use icgalp::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

/// Uniform-ish point of the ℓ1 ball with the given norm.
pub fn point_with_l1_norm(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> Vector {
    let v = gaussian_vector(rng, n);
    &v * (norm / v.lp_norm(1))
}

/// Orthonormal basis of the null space of a full-row-rank `a`, by
/// Gram-Schmidt on the rows followed by the coordinate vectors.
pub fn null_basis(a: &Matrix) -> Matrix {
    let (m, d) = a.shape();
    let mut basis: Vec<Vector> = Vec::new();
    let push = |v: Vector, basis: &mut Vec<Vector>| {
        let mut w = v;
        for _ in 0..2 {
            for q in basis.iter() {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let nrm = w.norm();
        if nrm > 1e-8 {
            basis.push(w / nrm);
            true
        } else {
            false
        }
    };
    for i in 0..m {
        assert!(push(a.row(i).transpose(), &mut basis), "rows must be independent");
    }
    let mut null = Vec::new();
    for j in 0..d {
        let before = basis.len();
        let mut e = Vector::zeros(d);
        e[j] = 1.0;
        if push(e, &mut basis) && basis.len() > before {
            null.push(basis.last().unwrap().clone());
        }
    }
    Matrix::from_columns(&null)
}

/// A small projection instance with a known interior feasible point.
pub struct SmallInstance {
    pub y: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub interior: Vector,
}

pub fn small_instance(seed: u64) -> SmallInstance {
    const SHAPES: [(usize, usize); 4] = [(2, 1), (3, 1), (3, 2), (4, 2)];
    let mut r = rng(seed);
    let (d, m) = SHAPES[r.random_range(0..SHAPES.len())];
    let a = gaussian_matrix(&mut r, m, d);
    let interior = point_with_l1_norm(&mut r, d, 0.3);
    let b = &a * &interior;
    let y = gaussian_vector(&mut r, d) * 2.0;
    SmallInstance { y, a, b, interior }
}

/// Moves `x` toward `center` until it lies in the unit ℓ1 ball.
fn pull_into_ball(center: &Vector, x: &Vector) -> Vector {
    if x.lp_norm(1) <= 1.0 {
        return x.clone();
    }
    let d = x - center;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (center + &d * mid).lp_norm(1) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    center + d * lo
}

/// Brute-force minimizer of `‖x - y‖²` over `{‖x‖₁ ≤ 1, Ax = b}` for a
/// null space of dimension one or two. Searches a grid in null-space
/// coordinates around the interior point, refining the window around the
/// incumbent; grid points outside the ball are pulled radially onto it.
pub fn grid_minimizer(inst: &SmallInstance) -> Vector {
    let null = null_basis(&inst.a);
    let k = null.ncols();
    assert!(k == 1 || k == 2, "null space dimension {k} not supported");
    let eval = |t: &[f64]| -> (f64, Vector) {
        let mut x = inst.interior.clone();
        for (j, tj) in t.iter().enumerate() {
            x += null.column(j) * *tj;
        }
        let x = pull_into_ball(&inst.interior, &x);
        ((&x - &inst.y).norm_squared(), x)
    };

    let mut center = vec![0.0; k];
    let mut half_width = 2.5;
    let steps: i64 = 200;
    let mut best = eval(&center);
    for _ in 0..5 {
        let pitch = half_width / steps as f64;
        let mut best_t = center.clone();
        let range = -steps..=steps;
        let second: Vec<i64> = if k == 2 { range.clone().collect() } else { vec![0] };
        for i in range {
            for &j in &second {
                let mut t = vec![center[0] + i as f64 * pitch];
                if k == 2 {
                    t.push(center[1] + j as f64 * pitch);
                }
                let cand = eval(&t);
                if cand.0 < best.0 {
                    best = cand;
                    best_t = t;
                }
            }
        }
        center = best_t;
        half_width = 20.0 * pitch;
    }
    best.1
}

/// Sample mean and its standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
