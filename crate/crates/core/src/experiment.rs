//! The projection experiment: data generation, oracle construction, the
//! comparison matrix and its summary.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, AffineProjector, BaselineError, BaselineResult, KktCertificate};
use crate::config::{OracleConfig, ProblemConfig};
use crate::diagnostics::{trace_slope, RateSlope};
use crate::lmo::l1_ball_lmo;
use crate::oracles::{
    batch_oracle, exact_oracle, sweeping_oracle, variance_reduced_oracle, FiniteSum, GradientOracle, OracleError,
    OracleKind, PenaltySampled, ProjectionLoss,
};
use crate::schedules::Schedule;
use crate::solver::{self, ProblemSpec, Reference, RunOptions, RunOutput, SolverError};
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// `minimize ‖x - y‖²/(2n)` over `‖x‖₁ ≤ radius`, `A x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionInstance {
    pub y: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub radius: f64,
}

impl ProjectionInstance {
    /// Builds the instance of a problem block. Random data uses standard
    /// normal entries for `A` and `y`; `y` is rescaled when needed so that
    /// the projection of `y` onto `{Ax = 0}` lies outside the ball.
    pub fn generate(cfg: &ProblemConfig) -> Result<Self, ExperimentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
        let (n, m) = (cfg.n, cfg.m);
        let a = match &cfg.constraint {
            Some(rows) => Matrix::from_fn(m, n, |i, j| rows[i][j]),
            None => Matrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng)),
        };
        let mut y = match &cfg.target {
            Some(y) => Vector::from_column_slice(y),
            None => Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)),
        };
        let b = Vector::zeros(m);
        if cfg.target.is_none() {
            let unconstrained = AffineProjector::new(&a, &b)?.project(&y);
            let l1 = unconstrained.lp_norm(1);
            if l1 <= cfg.radius && l1 > 0.0 {
                y *= 2.0 * cfg.radius / l1;
            }
        }
        Ok(Self { y, a, b, radius: cfg.radius })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn loss(&self) -> ProjectionLoss {
        ProjectionLoss { target: self.y.clone() }
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        (x - &self.y).norm_squared() / (2.0 * self.dim() as f64)
    }
}

/// High-precision solution with its multiplier, scaled to the `1/(2n)` loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub n: usize,
    pub m: usize,
    pub data_seed: u64,
    pub x_star: Vec<f64>,
    /// Multiplier of `A x = b` for `f(x) = ‖x - y‖²/(2n)`.
    pub mu_star: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub kkt_residual: f64,
}

impl BaselineFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("baseline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Whether this file was computed for the given problem block.
    pub fn matches(&self, cfg: &ProblemConfig) -> bool {
        self.n == cfg.n && self.m == cfg.m && self.data_seed == cfg.data_seed && self.x_star.len() == cfg.n
    }

    pub fn reference(&self) -> Reference {
        Reference {
            x_star: Vector::from_column_slice(&self.x_star),
            mu_star: Some(Vector::from_column_slice(&self.mu_star)),
        }
    }
}

pub fn solve_baseline(
    instance: &ProjectionInstance,
    cfg: &ProblemConfig,
    tol: f64,
    max_iter: usize,
) -> Result<(BaselineResult, KktCertificate, BaselineFile), ExperimentError> {
    let result = baseline::dykstra(&instance.y, &instance.a, &instance.b, instance.radius, tol, max_iter)?;
    let cert = baseline::kkt_certificate(&instance.y, &instance.a, instance.radius, &result.x_star);
    let n = instance.dim() as f64;
    let file = BaselineFile {
        n: cfg.n,
        m: cfg.m,
        data_seed: cfg.data_seed,
        x_star: result.x_star.iter().copied().collect(),
        mu_star: cert.mu.iter().map(|v| v / n).collect(),
        iterations: result.iterations,
        residual: result.residual,
        kkt_residual: cert.residual,
    };
    Ok((result, cert, file))
}

fn with_penalty<P: FiniteSum + 'static>(
    problem: P,
    instance: &ProjectionInstance,
    schedule: &Schedule,
    sample_quadratic: bool,
) -> Result<Box<dyn FiniteSumBox>, OracleError> {
    Ok(if sample_quadratic {
        Box::new(PenaltySampled::new(problem, instance.a.clone(), instance.b.clone(), schedule.rho)?)
    } else {
        Box::new(problem)
    })
}

/// Object-safe alias so oracles can be built over either summand layout.
pub trait FiniteSumBox: FiniteSum {}
impl<T: FiniteSum> FiniteSumBox for T {}

impl FiniteSum for Box<dyn FiniteSumBox> {
    fn num_summands(&self) -> usize {
        (**self).num_summands()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn accumulate(&self, i: usize, x: &Vector, weight: f64, out: &mut Vector) {
        (**self).accumulate(i, x, weight, out)
    }
    fn full_gradient(&self, x: &Vector) -> Vector {
        (**self).full_gradient(x)
    }
    fn value(&self, x: &Vector) -> Option<f64> {
        (**self).value(x)
    }
    fn refresh(&mut self, x: &Vector) {
        (**self).refresh(x)
    }
    fn includes_penalty(&self) -> bool {
        (**self).includes_penalty()
    }
}

pub fn build_oracle(
    instance: &ProjectionInstance,
    schedule: &Schedule,
    cfg: &OracleConfig,
    seed: u64,
) -> Result<Box<dyn GradientOracle>, ExperimentError> {
    let problem = with_penalty(instance.loss(), instance, schedule, cfg.sample_quadratic)?;
    Ok(match cfg.kind {
        OracleKind::Exact => Box::new(exact_oracle(problem)),
        OracleKind::Batch => Box::new(batch_oracle(problem, *schedule, cfg.alpha_factor, seed)),
        OracleKind::VarianceReduced => {
            Box::new(variance_reduced_oracle(problem, *schedule, cfg.alpha, cfg.batch, seed)?)
        }
        OracleKind::Sweeping => Box::new(sweeping_oracle(problem)?),
    })
}

pub fn build_spec(
    instance: &ProjectionInstance,
    schedule: &Schedule,
    cfg: &OracleConfig,
    seed: u64,
) -> Result<ProblemSpec, ExperimentError> {
    let oracle = build_oracle(instance, schedule, cfg, seed)?;
    Ok(ProblemSpec::new(oracle, l1_ball_lmo(instance.dim(), instance.radius), instance.a.clone(), instance.b.clone())?)
}

pub fn run_oracle(
    instance: &ProjectionInstance,
    schedule: &Schedule,
    cfg: &OracleConfig,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunOutput, ExperimentError> {
    let mut spec = build_spec(instance, schedule, cfg, seed)?;
    Ok(solver::run(&mut spec, schedule, opts)?)
}

/// One cell of the comparison matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub oracle: OracleConfig,
}

/// Short name of an oracle configuration, used for trace file names.
pub fn variant_label(oracle: &OracleConfig) -> String {
    let base = match oracle.kind {
        OracleKind::Exact => "cgalp".to_string(),
        OracleKind::Batch => "batch".to_string(),
        OracleKind::VarianceReduced => format!("vr_b{}", oracle.batch),
        OracleKind::Sweeping => "sweeping".to_string(),
    };
    if oracle.sample_quadratic {
        format!("{base}_quad")
    } else {
        base
    }
}

/// Exact CGALP, sweeping, and stochastic averaging with batch 1, 64 and 256,
/// each with and without sampling of the augmented Lagrangian gradient.
pub fn comparison_matrix(alpha: f64) -> Vec<Variant> {
    let mut oracles = vec![OracleConfig::default(), OracleConfig { kind: OracleKind::Sweeping, ..Default::default() }];
    for sample_quadratic in [false, true] {
        for batch in [1, 64, 256] {
            oracles.push(OracleConfig {
                kind: OracleKind::VarianceReduced,
                alpha,
                batch,
                sample_quadratic,
                ..Default::default()
            });
        }
    }
    oracles.into_iter().map(|oracle| Variant { label: variant_label(&oracle), oracle }).collect()
}

/// Runs variants concurrently; results keep the input order.
pub fn run_variants(
    instance: &ProjectionInstance,
    schedule: &Schedule,
    variants: &[Variant],
    seed: u64,
    opts: &RunOptions,
) -> Vec<Result<RunOutput, ExperimentError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| scope.spawn(move || run_oracle(instance, schedule, &v.oracle, seed, opts)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub iterations: usize,
    pub dist_sq_erg: Option<f64>,
    pub feas_sq_erg: f64,
    pub feas_slope: Option<f64>,
    pub dist_slope: Option<f64>,
}

impl SummaryRow {
    pub fn from_run(label: &str, out: &RunOutput) -> Self {
        let last = out.trace.last().expect("runs record their final iterate");
        let slope = |r: Result<RateSlope, _>| r.ok().and_then(RateSlope::value);
        Self {
            label: label.to_string(),
            iterations: last.k + 1,
            dist_sq_erg: last.dist_sq_erg,
            feas_sq_erg: last.feas_sq_erg_xip1,
            feas_slope: slope(trace_slope(&out.trace, |r| Some(r.feas_sq_erg_xip1))),
            dist_slope: slope(trace_slope(&out.trace, |r| r.dist_sq_erg)),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>10} {:>12} {:>12} {:>11} {:>11}",
        "variant", "iters", "dist_sq_erg", "feas_sq_erg", "feas_slope", "dist_slope"
    );
    for r in rows {
        let slope = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<14} {:>10} {:>12} {:>12} {:>11} {:>11}",
            r.label,
            r.iterations,
            cell(r.dist_sq_erg),
            cell(Some(r.feas_sq_erg)),
            slope(r.feas_slope),
            slope(r.dist_slope)
        );
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("variant,iterations,dist_sq_erg,feas_sq_erg,feas_slope,dist_slope\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.label,
            r.iterations,
            opt(r.dist_sq_erg),
            r.feas_sq_erg,
            opt(r.feas_slope),
            opt(r.dist_slope)
        );
    }
    s
}
