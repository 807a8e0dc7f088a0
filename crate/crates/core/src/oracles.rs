//! Gradient oracles for finite-sum smooth terms `f = (1/n) Σ f_i`.
//!
//! Every oracle returns an estimate `∇̃_k` of `∇f(x_k)`. The error is
//! reported as `Λ_k = ∇̃_k - ∇f(x_k)`.
//!
//! - [`ExactOracle`]: the full gradient.
//! - [`BatchOracle`]: mean of `n(k) = max(1, ⌈α (γ_k/ζ(γ_k))²⌉)` i.i.d. samples.
//! - [`VarianceReducedOracle`]: `∇̃_k = (1-ν_k) ∇̃_{k-1} + ν_k ĝ_k` with
//!   `ν_k = γ_k^α` and `ĝ_k` a fixed-size sample mean.
//! - [`SweepingOracle`]: cycles through the summands, keeping the last
//!   gradient of each one.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedules::{Parameters, Schedule};
use crate::{Matrix, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("error trace has {0} points, at least 100 are needed")]
    TraceTooShort(usize),
    #[error("penalty sampling needs one summand per coordinate (n = {n}, dim = {dim})")]
    SummandLayout { n: usize, dim: usize },
    #[error("variance reduction weight exponent {0} must lie in (0, 1)")]
    WeightExponent(f64),
    #[error("{0} must be at least 1")]
    EmptyBatch(&'static str),
}

/// `f(x) = (1/n) Σ_i f_i(x)`.
pub trait FiniteSum: Send {
    fn num_summands(&self) -> usize;

    fn dim(&self) -> usize;

    /// `out += weight · ∇f_i(x)`.
    fn accumulate(&self, i: usize, x: &Vector, weight: f64, out: &mut Vector);

    /// `∇f(x)`.
    fn full_gradient(&self, x: &Vector) -> Vector {
        let n = self.num_summands();
        let mut g = Vector::zeros(self.dim());
        for i in 0..n {
            self.accumulate(i, x, 1.0 / n as f64, &mut g);
        }
        g
    }

    /// `f(x)`, when available.
    fn value(&self, _x: &Vector) -> Option<f64> {
        None
    }

    /// Called once per iteration before any summand is evaluated at `x`.
    fn refresh(&mut self, _x: &Vector) {}

    /// Whether the augmented Lagrangian term `ρ A*(Ax - b)` is part of the
    /// estimate.
    fn includes_penalty(&self) -> bool {
        false
    }

    fn summand_gradient(&self, i: usize, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim());
        self.accumulate(i, x, 1.0, &mut g);
        g
    }
}

/// `f_i(x) = ½ (x_i - y_i)²`, so `f(x) = ‖x - y‖² / (2n)`.
#[derive(Debug, Clone)]
pub struct ProjectionLoss {
    pub target: Vector,
}

impl FiniteSum for ProjectionLoss {
    fn num_summands(&self) -> usize {
        self.target.len()
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn accumulate(&self, i: usize, x: &Vector, weight: f64, out: &mut Vector) {
        out[i] += weight * (x[i] - self.target[i]);
    }

    fn full_gradient(&self, x: &Vector) -> Vector {
        (x - &self.target) / self.target.len() as f64
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some((x - &self.target).norm_squared() / (2.0 * self.target.len() as f64))
    }
}

/// `f_i(x) = ½ (⟨a_i, x⟩ - c_i)²` with rows `a_i` of `design`.
#[derive(Debug, Clone)]
pub struct LeastSquaresSum {
    pub design: Matrix,
    pub response: Vector,
}

impl FiniteSum for LeastSquaresSum {
    fn num_summands(&self) -> usize {
        self.design.nrows()
    }

    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn accumulate(&self, i: usize, x: &Vector, weight: f64, out: &mut Vector) {
        let row = self.design.row(i);
        let r = row.dot(&x.transpose()) - self.response[i];
        for (o, a) in out.iter_mut().zip(row.iter()) {
            *o += weight * r * a;
        }
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        let r = &self.design * x - &self.response;
        Some(r.norm_squared() / (2.0 * self.num_summands() as f64))
    }
}

/// Folds `ρ A*(Ax - b)` into the summands so that sampling also perturbs
/// the augmented Lagrangian gradient: summand `i` carries `n ρ [A*(Ax-b)]_i e_i`.
pub struct PenaltySampled<P> {
    inner: P,
    a: Matrix,
    b: Vector,
    rho: f64,
    scaled_residual: Vector,
}

impl<P: FiniteSum> PenaltySampled<P> {
    pub fn new(inner: P, a: Matrix, b: Vector, rho: f64) -> Result<Self, OracleError> {
        let (n, dim) = (inner.num_summands(), inner.dim());
        if n != dim {
            return Err(OracleError::SummandLayout { n, dim });
        }
        Ok(Self { inner, a, b, rho, scaled_residual: Vector::zeros(dim) })
    }

    fn penalty_gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.b)) * self.rho
    }
}

impl<P: FiniteSum> FiniteSum for PenaltySampled<P> {
    fn num_summands(&self) -> usize {
        self.inner.num_summands()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn accumulate(&self, i: usize, x: &Vector, weight: f64, out: &mut Vector) {
        self.inner.accumulate(i, x, weight, out);
        out[i] += weight * self.scaled_residual[i];
    }

    fn full_gradient(&self, x: &Vector) -> Vector {
        self.inner.full_gradient(x) + self.penalty_gradient(x)
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        self.inner.value(x)
    }

    fn refresh(&mut self, x: &Vector) {
        self.inner.refresh(x);
        self.scaled_residual = self.penalty_gradient(x) * self.num_summands() as f64;
    }

    fn includes_penalty(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Exact,
    Batch,
    VarianceReduced,
    Sweeping,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleKind::Exact => "exact",
            OracleKind::Batch => "batch",
            OracleKind::VarianceReduced => "variance_reduced",
            OracleKind::Sweeping => "sweeping",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub gradient: Vector,
    pub samples_used: usize,
}

pub trait GradientOracle: Send {
    fn kind(&self) -> OracleKind;

    fn dim(&self) -> usize;

    /// Estimate at the iterate of solver iteration `k`. Calls must come in
    /// increasing `k` starting at 0.
    fn next_gradient(&mut self, x: &Vector, k: usize) -> OracleSample;

    /// Reference gradient used to measure `Λ_k`.
    fn exact_gradient(&self, x: &Vector) -> Vector;

    fn objective(&self, x: &Vector) -> Option<f64>;

    fn includes_penalty(&self) -> bool;
}

/// Full gradient of a finite sum.
pub struct ExactOracle<P> {
    problem: P,
}

pub fn exact_oracle<P: FiniteSum>(problem: P) -> ExactOracle<P> {
    ExactOracle { problem }
}

impl<P: FiniteSum> GradientOracle for ExactOracle<P> {
    fn kind(&self) -> OracleKind {
        OracleKind::Exact
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn next_gradient(&mut self, x: &Vector, _k: usize) -> OracleSample {
        self.problem.refresh(x);
        OracleSample { gradient: self.problem.full_gradient(x), samples_used: self.problem.num_summands() }
    }

    fn exact_gradient(&self, x: &Vector) -> Vector {
        self.problem.full_gradient(x)
    }

    fn objective(&self, x: &Vector) -> Option<f64> {
        self.problem.value(x)
    }

    fn includes_penalty(&self) -> bool {
        self.problem.includes_penalty()
    }
}

/// Mean of `count` i.i.d. uniform summand gradients, drawn with replacement.
///
/// Large batches are drawn as multinomial counts over the summands (sequential
/// binomials), which has the same law as drawing indices one at a time and
/// costs `O(n)` instead of `O(count)`.
fn sample_mean<P: FiniteSum>(problem: &P, x: &Vector, count: usize, rng: &mut ChaCha8Rng) -> Vector {
    let n = problem.num_summands();
    let mut g = Vector::zeros(problem.dim());
    let w = 1.0 / count as f64;
    if count < n {
        for _ in 0..count {
            let i = rng.random_range(0..n);
            problem.accumulate(i, x, w, &mut g);
        }
    } else {
        let mut remaining = count as u64;
        for i in 0..n {
            if remaining == 0 {
                break;
            }
            let c = if i + 1 == n {
                remaining
            } else {
                let p = 1.0 / (n - i) as f64;
                Binomial::new(remaining, p).expect("p is a probability").sample(rng)
            };
            if c > 0 {
                problem.accumulate(i, x, c as f64 * w, &mut g);
            }
            remaining -= c;
        }
    }
    g
}

/// Growing-batch stochastic gradient.
pub struct BatchOracle<P> {
    problem: P,
    schedule: Schedule,
    alpha_factor: f64,
    rng: ChaCha8Rng,
}

pub fn batch_oracle<P: FiniteSum>(problem: P, schedule: Schedule, alpha_factor: f64, seed: u64) -> BatchOracle<P> {
    BatchOracle { problem, schedule, alpha_factor, rng: ChaCha8Rng::seed_from_u64(seed) }
}

impl<P: FiniteSum> BatchOracle<P> {
    /// `n(k) = max(1, ⌈α (γ_k / ζ(γ_k))²⌉)`.
    pub fn batch_size(&self, k: usize) -> usize {
        batch_size(&self.schedule, self.alpha_factor, k)
    }
}

pub fn batch_size(schedule: &Schedule, alpha_factor: f64, k: usize) -> usize {
    let gamma = schedule.gamma(k);
    let ratio = gamma / schedule.zeta(gamma);
    let n = (alpha_factor * ratio * ratio).ceil();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

impl<P: FiniteSum> GradientOracle for BatchOracle<P> {
    fn kind(&self) -> OracleKind {
        OracleKind::Batch
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn next_gradient(&mut self, x: &Vector, k: usize) -> OracleSample {
        self.problem.refresh(x);
        let count = self.batch_size(k);
        let gradient = sample_mean(&self.problem, x, count, &mut self.rng);
        OracleSample { gradient, samples_used: count }
    }

    fn exact_gradient(&self, x: &Vector) -> Vector {
        self.problem.full_gradient(x)
    }

    fn objective(&self, x: &Vector) -> Option<f64> {
        self.problem.value(x)
    }

    fn includes_penalty(&self) -> bool {
        self.problem.includes_penalty()
    }
}

/// Stochastic average of sampled gradients with weight `ν_k = γ_k^α`.
pub struct VarianceReducedOracle<P> {
    problem: P,
    schedule: Schedule,
    alpha: f64,
    batch: usize,
    rng: ChaCha8Rng,
    average: Vector,
}

pub fn variance_reduced_oracle<P: FiniteSum>(
    problem: P,
    schedule: Schedule,
    alpha: f64,
    batch: usize,
    seed: u64,
) -> Result<VarianceReducedOracle<P>, OracleError> {
    // The admissible range is (0, τ) with τ ≤ 1 the Hölder exponent of ∇f.
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OracleError::WeightExponent(alpha));
    }
    if batch == 0 {
        return Err(OracleError::EmptyBatch("batch"));
    }
    let average = Vector::zeros(problem.dim());
    Ok(VarianceReducedOracle { problem, schedule, alpha, batch, rng: ChaCha8Rng::seed_from_u64(seed), average })
}

impl<P> VarianceReducedOracle<P> {
    pub fn weight(&self, k: usize) -> f64 {
        self.schedule.gamma(k).powf(self.alpha)
    }
}

impl<P: FiniteSum> GradientOracle for VarianceReducedOracle<P> {
    fn kind(&self) -> OracleKind {
        OracleKind::VarianceReduced
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn next_gradient(&mut self, x: &Vector, k: usize) -> OracleSample {
        self.problem.refresh(x);
        let nu = self.weight(k);
        let fresh = sample_mean(&self.problem, x, self.batch, &mut self.rng);
        self.average *= 1.0 - nu;
        self.average.axpy(nu, &fresh, 1.0);
        OracleSample { gradient: self.average.clone(), samples_used: self.batch }
    }

    fn exact_gradient(&self, x: &Vector) -> Vector {
        self.problem.full_gradient(x)
    }

    fn objective(&self, x: &Vector) -> Option<f64> {
        self.problem.value(x)
    }

    fn includes_penalty(&self) -> bool {
        self.problem.includes_penalty()
    }
}

/// Deterministic cyclic sweep over the summands.
///
/// Solver iteration `k` is served as sweep index `j = k + 1`, which visits
/// summand `((j - 1) mod n)`. The first `n` calls build the partial sums
/// `(1/n) Σ_{i ≤ j} ∇f_i(x_i)`; afterwards each call swaps the stale gradient
/// of one summand for a fresh one. The running sum is rebuilt from the table
/// at the end of every cycle to keep rounding from accumulating.
pub struct SweepingOracle<P> {
    problem: P,
    table: Vec<Vector>,
    average: Vector,
}

pub fn sweeping_oracle<P: FiniteSum>(problem: P) -> Result<SweepingOracle<P>, OracleError> {
    let n = problem.num_summands();
    if n == 0 {
        return Err(OracleError::EmptyBatch("number of summands"));
    }
    let dim = problem.dim();
    Ok(SweepingOracle { problem, table: vec![Vector::zeros(dim); n], average: Vector::zeros(dim) })
}

impl<P: FiniteSum> GradientOracle for SweepingOracle<P> {
    fn kind(&self) -> OracleKind {
        OracleKind::Sweeping
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn next_gradient(&mut self, x: &Vector, k: usize) -> OracleSample {
        self.problem.refresh(x);
        let n = self.table.len();
        let i = k % n;
        let fresh = self.problem.summand_gradient(i, x);
        let inv_n = 1.0 / n as f64;
        self.average.axpy(inv_n, &fresh, 1.0);
        self.average.axpy(-inv_n, &self.table[i], 1.0);
        self.table[i] = fresh;
        if (k + 1) % n == 0 {
            let mut sum = Vector::zeros(self.average.len());
            for g in &self.table {
                sum += g;
            }
            self.average = sum * inv_n;
        }
        OracleSample { gradient: self.average.clone(), samples_used: 1 }
    }

    fn exact_gradient(&self, x: &Vector) -> Vector {
        self.problem.full_gradient(x)
    }

    fn objective(&self, x: &Vector) -> Option<f64> {
        self.problem.value(x)
    }

    fn includes_penalty(&self) -> bool {
        self.problem.includes_penalty()
    }
}

/// Observed error of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub k: usize,
    pub gamma: f64,
    pub err_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummabilityReport {
    /// `S_K = Σ_{k ≤ K} γ_k ‖Λ_k‖`, one entry per sample.
    pub partial_sums: Vec<f64>,
    /// Log-log slope of `γ_k ‖Λ_k‖` against `k + 1` over the tail half;
    /// `None` when every tail error is zero.
    pub tail_slope: Option<f64>,
    pub passed: bool,
}

/// Slopes within this distance of -1 are indistinguishable from the
/// borderline non-summable case.
pub const SLOPE_RESOLUTION: f64 = 1e-6;

/// Empirical necessary-condition check for summability of `γ_k ‖Λ_k‖`:
/// the terms must decay faster than `1/k` over the tail half of the trace.
pub fn summability_probe(samples: &[ErrorSample]) -> Result<SummabilityReport, OracleError> {
    if samples.len() < 100 {
        return Err(OracleError::TraceTooShort(samples.len()));
    }
    let mut acc = 0.0;
    let partial_sums = samples
        .iter()
        .map(|s| {
            acc += s.gamma * s.err_norm;
            acc
        })
        .collect();

    let tail = &samples[samples.len() / 2..];
    if tail.iter().all(|s| s.err_norm == 0.0) {
        return Ok(SummabilityReport { partial_sums, tail_slope: None, passed: true });
    }
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|s| s.gamma * s.err_norm > 0.0)
        .map(|s| (((s.k + 1) as f64).ln(), (s.gamma * s.err_norm).ln()))
        .collect();
    let tail_slope = crate::diagnostics::least_squares_slope(&pts);
    let passed = tail_slope.is_some_and(|m| m < -1.0 - SLOPE_RESOLUTION);
    Ok(SummabilityReport { partial_sums, tail_slope, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::make_default_schedule;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn two_summands() -> LeastSquaresSum {
        LeastSquaresSum {
            design: Matrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.5, -1.0, 3.0]),
            response: v(&[1.0, -2.0]),
        }
    }

    #[test]
    fn batch_sizes() {
        let s = make_default_schedule(0.24).unwrap();
        assert_eq!(batch_size(&s, 1.0, 9), 34);
        assert_eq!(batch_size(&s, 1.0, 0), 1);
        assert_eq!(batch_size(&s, 1e-9, 100), 1);
    }

    #[test]
    fn singleton_batch_is_exact() {
        let s = make_default_schedule(0.24).unwrap();
        let p = ProjectionLoss { target: v(&[0.7]) };
        let mut o = batch_oracle(p.clone(), s, 1.0, 1);
        for k in 0..30 {
            let x = v(&[k as f64 * 0.01]);
            assert_relative_eq!(o.next_gradient(&x, k).gradient[0], p.full_gradient(&x)[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn multinomial_route_keeps_total_weight() {
        // Each summand gradient of ProjectionLoss at x = y + 1 is e_i, so the
        // sample mean sums to 1 regardless of which indices are drawn.
        let y = Vector::zeros(8);
        let p = ProjectionLoss { target: y.clone() };
        let x = y.add_scalar(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for count in [1, 7, 8, 100, 12345] {
            let g = sample_mean(&p, &x, count, &mut rng);
            assert_relative_eq!(g.sum(), 1.0, max_relative = 1e-12);
            assert!(g.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn variance_reduced_recursion() {
        let s = make_default_schedule(0.24).unwrap();
        let p = ProjectionLoss { target: v(&[2.0]) };
        let mut o = variance_reduced_oracle(p.clone(), s, 2.0 / 3.0, 1, 3).unwrap();
        let xs = [v(&[0.0]), v(&[0.5]), v(&[-0.25])];
        let mut expected = 0.0;
        for (k, x) in xs.iter().enumerate() {
            let nu = s.gamma(k).powf(2.0 / 3.0);
            expected = (1.0 - nu) * expected + nu * (x[0] - 2.0);
            let got = o.next_gradient(x, k).gradient[0];
            assert_relative_eq!(got, expected, max_relative = 1e-14);
        }
        // ν_0 = 1 discards the zero initialisation.
        let mut fresh = variance_reduced_oracle(p, s, 2.0 / 3.0, 1, 3).unwrap();
        assert_eq!(fresh.next_gradient(&xs[1], 0).gradient[0], -1.5);
    }

    #[test]
    fn variance_reduced_rejects_bad_parameters() {
        let s = make_default_schedule(0.24).unwrap();
        let p = ProjectionLoss { target: v(&[2.0]) };
        assert!(matches!(variance_reduced_oracle(p.clone(), s, 1.0, 1, 0), Err(OracleError::WeightExponent(_))));
        assert!(matches!(variance_reduced_oracle(p, s, 0.5, 0, 0), Err(OracleError::EmptyBatch(_))));
    }

    #[test]
    fn sweeping_warm_up_and_recursion() {
        let p = two_summands();
        let mut o = sweeping_oracle(p.clone()).unwrap();
        let x1 = v(&[0.1, 0.2, 0.3]);
        let x2 = v(&[-0.5, 0.0, 1.0]);
        let x3 = v(&[0.4, -0.4, 0.2]);
        let g = |i, x: &Vector| p.summand_gradient(i, x);

        let d1 = o.next_gradient(&x1, 0).gradient;
        assert_relative_eq!(d1, g(0, &x1) * 0.5, max_relative = 1e-14);
        let d2 = o.next_gradient(&x2, 1).gradient;
        assert_relative_eq!(d2, (g(0, &x1) + g(1, &x2)) * 0.5, max_relative = 1e-14);
        let d3 = o.next_gradient(&x3, 2).gradient;
        assert_relative_eq!(d3, &d2 + (g(0, &x3) - g(0, &x1)) * 0.5, max_relative = 1e-14, epsilon = 1e-15);
    }

    #[test]
    fn penalty_sampling_is_unbiased_per_summand() {
        let a = Matrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let b = v(&[0.3]);
        let mut p = PenaltySampled::new(ProjectionLoss { target: v(&[1.0, 2.0, 3.0]) }, a, b, 4.0).unwrap();
        let x = v(&[0.2, -0.1, 0.4]);
        p.refresh(&x);
        let mut mean = Vector::zeros(3);
        for i in 0..3 {
            p.accumulate(i, &x, 1.0 / 3.0, &mut mean);
        }
        assert_relative_eq!(mean, p.full_gradient(&x), max_relative = 1e-13);
        assert!(p.includes_penalty());
        assert!(PenaltySampled::new(two_summands(), Matrix::zeros(1, 3), v(&[0.0]), 1.0).is_err());
    }

    fn synthetic(exponent: f64) -> Vec<ErrorSample> {
        (0..1000)
            .map(|k| ErrorSample { k, gamma: 1.0, err_norm: ((k + 1) as f64).powf(exponent) })
            .collect()
    }

    #[test]
    fn probe_examples() {
        let exact: Vec<_> = (0..200).map(|k| ErrorSample { k, gamma: 0.5, err_norm: 0.0 }).collect();
        let r = summability_probe(&exact).unwrap();
        assert!(r.passed);
        assert_eq!(r.tail_slope, None);

        let r = summability_probe(&synthetic(-1.5)).unwrap();
        assert_relative_eq!(r.tail_slope.unwrap(), -1.5, epsilon = 1e-9);
        assert!(r.passed);

        let r = summability_probe(&synthetic(-1.0)).unwrap();
        assert_relative_eq!(r.tail_slope.unwrap(), -1.0, epsilon = 1e-9);
        assert!(!r.passed);

        assert_eq!(summability_probe(&exact[..99]), Err(OracleError::TraceTooShort(99)));
    }
}
