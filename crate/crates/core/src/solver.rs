//! The main iteration.
//!
//! One step from `(x_k, μ_k)`:
//!
//! ```text
//! y_k     = prox_{β_k g}(T x_k)
//! z_k     = ∇̃_k + T*(T x_k - y_k)/β_k + A*μ_k + ρ_k A*(A x_k - b)
//! ŝ_k     ≈ argmin_s h(s) + ⟨z_k, s⟩
//! x_{k+1} = x_k - γ_k (x_k - ŝ_k)
//! μ_{k+1} = μ_k + θ_k (A x_{k+1} - b)
//! ```
//!
//! With an exact gradient oracle and an exact LMO this is plain CGALP.

use thiserror::Error;

use crate::diagnostics::TraceRecord;
use crate::lmo::DirectionOracle;
use crate::oracles::{GradientOracle, OracleKind};
use crate::proximal::Prox;
use crate::schedules::{Parameters, ValidationReport, ValidationScope};
use crate::{Matrix, Vector};

/// Iterates with `‖μ‖` beyond this are treated as divergent.
pub const DUAL_BLOWUP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("b is not in the range of A (least-squares residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("schedule failed validation:\n{0}")]
    Unvalidated(ValidationReport),
    #[error("divergence at iteration {k}: {reason} (|x| = {x_norm:.3e}, |mu| = {mu_norm:.3e}, |z| = {z_norm:.3e})")]
    Diverged { k: usize, reason: &'static str, x_norm: f64, mu_norm: f64, z_norm: f64 },
    #[error("iteration count must be at least 1")]
    NoIterations,
}

/// Problem data: `f` through its oracle, optional `g ∘ T`, `h` through its
/// LMO, and the constraint `A x = b`.
pub struct ProblemSpec {
    pub oracle: Box<dyn GradientOracle>,
    pub prox: Option<Box<dyn Prox>>,
    /// `None` is the identity.
    pub transform: Option<Matrix>,
    pub direction: DirectionOracle,
    pub a: Matrix,
    pub b: Vector,
}

impl ProblemSpec {
    pub fn new(
        oracle: Box<dyn GradientOracle>,
        direction: impl Into<DirectionOracle>,
        a: Matrix,
        b: Vector,
    ) -> Result<Self, SolverError> {
        let spec = Self { oracle, prox: None, transform: None, direction: direction.into(), a, b };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_prox(mut self, prox: Box<dyn Prox>, transform: Option<Matrix>) -> Result<Self, SolverError> {
        self.prox = Some(prox);
        self.transform = transform;
        self.check()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn check(&self) -> Result<(), SolverError> {
        let n = self.dim();
        if self.direction.lmo().dim() != n {
            return Err(SolverError::Dimension(format!(
                "LMO dimension {} differs from oracle dimension {n}",
                self.direction.lmo().dim()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(SolverError::Dimension(format!(
                "A is {}x{}, b has length {}, primal dimension is {n}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len()
            )));
        }
        if let Some(t) = &self.transform {
            if t.ncols() != n {
                return Err(SolverError::Dimension(format!("T has {} columns, expected {n}", t.ncols())));
            }
        }
        if self.b.len() > 0 {
            let residual = range_residual(&self.a, &self.b);
            if residual > 1e-10 * (1.0 + self.b.norm()) {
                return Err(SolverError::Infeasible { residual });
            }
        }
        Ok(())
    }

    fn apply_t(&self, x: &Vector) -> Vector {
        match &self.transform {
            Some(t) => t * x,
            None => x.clone(),
        }
    }

    fn apply_t_adjoint(&self, v: Vector) -> Vector {
        match &self.transform {
            Some(t) => t.tr_mul(&v),
            None => v,
        }
    }

    /// `Φ(x) = f(x) + g(Tx) + h(x)` when every value is available.
    pub fn objective(&self, x: &Vector) -> Option<f64> {
        let f = self.oracle.objective(x)?;
        let g = match &self.prox {
            Some(p) => p.value(&self.apply_t(x))?,
            None => 0.0,
        };
        Some(f + g + self.direction.lmo().h_value(x))
    }

    /// Classical Lagrangian `Φ(x) + ⟨μ, Ax - b⟩`.
    pub fn lagrangian(&self, x: &Vector, mu: &Vector) -> Option<f64> {
        Some(self.objective(x)? + mu.dot(&(&self.a * x - &self.b)))
    }

    pub fn feasibility_sq(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm_squared()
    }

    pub fn scope(&self) -> ValidationScope {
        ValidationScope { smoothing: self.prox.is_some() }
    }
}

/// `‖A x_ls - b‖` for the least-squares solution `x_ls`.
pub fn range_residual(a: &Matrix, b: &Vector) -> f64 {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    match svd.solve(b, eps) {
        Ok(x) => (a * x - b).norm(),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: Vector,
    pub mu: Vector,
    /// `Σ_{i<k} γ_i x_{i+1}`.
    pub ergodic_sum: Vector,
    /// `Σ_{i<k} γ_i x_i`.
    pub ergodic_sum_prev: Vector,
    /// `Γ_{k-1} = Σ_{i<k} γ_i`.
    pub ergodic_weight: f64,
}

impl SolverState {
    /// `x_0` is the LMO answer for the zero direction; `μ_0 = 0`.
    pub fn initial(spec: &ProblemSpec) -> Self {
        let n = spec.dim();
        Self {
            k: 0,
            x: spec.direction.lmo().minimize(&Vector::zeros(n)),
            mu: Vector::zeros(spec.b.len()),
            ergodic_sum: Vector::zeros(n),
            ergodic_sum_prev: Vector::zeros(n),
            ergodic_weight: 0.0,
        }
    }

    /// `Σ γ_i x_{i+1} / Γ`.
    pub fn ergodic(&self) -> Vector {
        &self.ergodic_sum / self.ergodic_weight
    }

    /// `Σ γ_i x_i / Γ`.
    pub fn ergodic_prev(&self) -> Vector {
        &self.ergodic_sum_prev / self.ergodic_weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub y: Option<Vector>,
    pub z: Vector,
    pub s_hat: Vector,
    pub samples_used: usize,
    /// `‖Λ_k‖`, zero for the exact oracle.
    pub err_norm: f64,
}

/// Executes iteration `state.k` in place.
pub fn step(spec: &mut ProblemSpec, sched: &dyn Parameters, state: &mut SolverState) -> Result<StepInfo, SolverError> {
    let k = state.k;
    let (gamma, beta, theta, rho) = (sched.gamma(k), sched.beta(k), sched.theta(k), sched.rho(k));

    let sample = spec.oracle.next_gradient(&state.x, k);
    let err_norm = match spec.oracle.kind() {
        OracleKind::Exact => 0.0,
        _ => (&sample.gradient - spec.oracle.exact_gradient(&state.x)).norm(),
    };

    let mut z = sample.gradient;
    let y = match &spec.prox {
        Some(prox) => {
            let tx = spec.apply_t(&state.x);
            let y = prox.prox(&tx, beta);
            z += spec.apply_t_adjoint((tx - &y) / beta);
            Some(y)
        }
        None => None,
    };
    let residual = &spec.a * &state.x - &spec.b;
    let dual_direction = if spec.oracle.includes_penalty() { state.mu.clone() } else { &state.mu + residual * rho };
    z += spec.a.tr_mul(&dual_direction);

    let s_hat = spec.direction.select(&z, k);
    let x_next = &state.x - (&state.x - &s_hat) * gamma;
    let mu_next = &state.mu + (&spec.a * &x_next - &spec.b) * theta;

    let diverged = |reason| SolverError::Diverged {
        k,
        reason,
        x_norm: x_next.norm(),
        mu_norm: mu_next.norm(),
        z_norm: z.norm(),
    };
    if !z.iter().all(|v| v.is_finite()) {
        return Err(diverged("non-finite direction"));
    }
    if !x_next.iter().chain(mu_next.iter()).all(|v| v.is_finite()) {
        return Err(diverged("non-finite iterate"));
    }
    if mu_next.norm() > DUAL_BLOWUP {
        return Err(diverged("dual iterate exceeds 1e12"));
    }

    state.ergodic_sum_prev.axpy(gamma, &state.x, 1.0);
    state.ergodic_sum.axpy(gamma, &x_next, 1.0);
    state.ergodic_weight += gamma;
    state.x = x_next;
    state.mu = mu_next;
    state.k += 1;

    Ok(StepInfo { y, z, s_hat, samples_used: sample.samples_used, err_norm })
}

/// Known solution used by the gap columns of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x_star: Vector,
    /// Multiplier estimate; enables the Lagrangian gap column.
    pub mu_star: Option<Vector>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub iterations: usize,
    /// Record every `trace_every` iterations, plus the last one.
    pub trace_every: usize,
    /// Skip the schedule validation gate.
    pub force: bool,
    pub reference: Option<Reference>,
}

impl RunOptions {
    pub fn new(iterations: usize) -> Self {
        Self { iterations, trace_every: 1, force: false, reference: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub state: SolverState,
}

/// Runs `opts.iterations` steps from the initial state.
pub fn run(spec: &mut ProblemSpec, sched: &dyn Parameters, opts: &RunOptions) -> Result<RunOutput, SolverError> {
    if opts.iterations == 0 {
        return Err(SolverError::NoIterations);
    }
    if !opts.force {
        let report = sched.validate(opts.iterations, spec.scope());
        if !report.passed {
            return Err(SolverError::Unvalidated(report));
        }
    }
    let every = opts.trace_every.max(1);
    let reference = opts.reference.as_ref().map(|r| {
        let phi = spec.objective(&r.x_star);
        (r, phi)
    });

    let mut state = SolverState::initial(spec);
    let mut trace = Vec::with_capacity(opts.iterations / every + 1);
    for _ in 0..opts.iterations {
        let k = state.k;
        let info = step(spec, sched, &mut state)?;
        if (k + 1) % every != 0 && k + 1 != opts.iterations {
            continue;
        }
        let erg = state.ergodic();
        let erg_prev = state.ergodic_prev();
        let obj_erg = spec.objective(&erg);
        let (obj_gap_erg, dist_sq_erg, lag_gap_erg) = match &reference {
            Some((r, phi_star)) => {
                let gap = obj_erg.zip(*phi_star).map(|(a, b)| a - b);
                let lag = r
                    .mu_star
                    .as_ref()
                    .and_then(|mu| Some(spec.lagrangian(&erg, mu)? - spec.lagrangian(&r.x_star, mu)?));
                (gap, Some((&erg - &r.x_star).norm_squared()), lag)
            }
            None => (None, None, None),
        };
        trace.push(TraceRecord {
            k,
            gamma_k: sched.gamma(k),
            gamma_sum: state.ergodic_weight,
            feas_sq: spec.feasibility_sq(&state.x),
            feas_sq_erg_xi: spec.feasibility_sq(&erg_prev),
            feas_sq_erg_xip1: spec.feasibility_sq(&erg),
            obj: spec.objective(&state.x),
            obj_gap_erg,
            dist_sq_erg,
            lag_gap_erg,
            err_norm: Some(info.err_norm),
            samples_used: info.samples_used,
        });
    }
    Ok(RunOutput { trace, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmo::l1_ball_lmo;
    use crate::oracles::{exact_oracle, ProjectionLoss};
    use crate::schedules::CustomSchedule;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    /// f = ½‖x - (2,0)‖² as a finite sum with n = 1 summand.
    struct Shifted;
    impl crate::oracles::FiniteSum for Shifted {
        fn num_summands(&self) -> usize {
            1
        }
        fn dim(&self) -> usize {
            2
        }
        fn accumulate(&self, _i: usize, x: &Vector, w: f64, out: &mut Vector) {
            *out += (x - v(&[2.0, 0.0])) * w;
        }
        fn value(&self, x: &Vector) -> Option<f64> {
            Some(0.5 * (x - v(&[2.0, 0.0])).norm_squared())
        }
    }

    fn constant(gamma: f64, rho: f64) -> CustomSchedule {
        CustomSchedule {
            gamma: Box::new(move |_| gamma),
            beta: Box::new(|_| 1.0),
            rho: Box::new(move |_| rho),
            c: 1.0,
            zeta_exponent: 2.0,
        }
    }

    fn toy() -> ProblemSpec {
        ProblemSpec::new(Box::new(exact_oracle(Shifted)), l1_ball_lmo(2, 1.0), Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[0.0]))
            .unwrap()
    }

    #[test]
    fn single_step_by_hand() {
        let mut spec = toy();
        let mut state = SolverState { x: v(&[0.0, 0.0]), ..SolverState::initial(&spec) };
        let info = step(&mut spec, &constant(1.0, 2.0), &mut state).unwrap();
        assert_eq!(info.z, v(&[-2.0, 0.0]));
        assert_eq!(info.s_hat, v(&[1.0, 0.0]));
        assert_eq!(state.x, v(&[1.0, 0.0]));
        assert_eq!(state.mu, v(&[1.0]));
        assert_eq!(info.y, None);
    }

    #[test]
    fn zero_step_keeps_iterate() {
        let mut spec = toy();
        let mut state = SolverState { x: v(&[0.25, -0.5]), ..SolverState::initial(&spec) };
        step(&mut spec, &constant(0.0, 2.0), &mut state).unwrap();
        assert_eq!(state.x, v(&[0.25, -0.5]));
    }

    #[test]
    fn fixed_point_when_vertex_is_selected() {
        // x_0 = (1, 0) is feasible for A = [0 1], b = 0, and z = ∇f(x_0) = (-1, 0)
        // selects x_0 itself.
        let mut spec = ProblemSpec::new(
            Box::new(exact_oracle(Shifted)),
            l1_ball_lmo(2, 1.0),
            Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
            v(&[0.0]),
        )
        .unwrap();
        let mut state = SolverState { x: v(&[1.0, 0.0]), ..SolverState::initial(&spec) };
        let before = state.clone();
        let info = step(&mut spec, &constant(1.0, 2.0), &mut state).unwrap();
        assert_eq!(info.s_hat, before.x);
        assert_eq!(state.x, before.x);
        assert_eq!(state.mu, before.mu);
    }

    #[test]
    fn infeasible_and_mismatched_specs() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let err = ProblemSpec::new(Box::new(exact_oracle(Shifted)), l1_ball_lmo(2, 1.0), a, v(&[0.0, 1.0]));
        assert!(matches!(err, Err(SolverError::Infeasible { .. })));
        let err = ProblemSpec::new(
            Box::new(exact_oracle(Shifted)),
            l1_ball_lmo(3, 1.0),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[0.0]),
        );
        assert!(matches!(err, Err(SolverError::Dimension(_))));
    }

    #[test]
    fn divergence_guard() {
        let mut spec = toy();
        let mut state = SolverState { mu: v(&[2e12]), ..SolverState::initial(&spec) };
        let err = step(&mut spec, &constant(0.5, 2.0), &mut state).unwrap_err();
        assert!(matches!(err, SolverError::Diverged { k: 0, .. }));
    }

    #[test]
    fn run_gate_and_trace_cadence() {
        let y = v(&[0.3, -2.0, 1.0, 0.4]);
        let a = Matrix::from_row_slice(1, 4, &[1.0, 1.0, 1.0, 1.0]);
        let build = || {
            ProblemSpec::new(Box::new(exact_oracle(ProjectionLoss { target: y.clone() })), l1_ball_lmo(4, 1.0), a.clone(), v(&[0.0]))
                .unwrap()
        };
        let mut bad = crate::schedules::make_default_schedule(0.24).unwrap();
        bad.rho = 1.0;
        assert!(matches!(run(&mut build(), &bad, &RunOptions::new(10)), Err(SolverError::Unvalidated(_))));

        let sched = crate::schedules::make_default_schedule(0.24).unwrap();
        let mut opts = RunOptions::new(25);
        opts.trace_every = 10;
        let out = run(&mut build(), &sched, &opts).unwrap();
        let ks: Vec<_> = out.trace.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![9, 19, 24]);
        assert!(out.trace.iter().all(|r| r.err_norm == Some(0.0) && r.samples_used == 4));
        assert!(matches!(run(&mut build(), &sched, &RunOptions::new(0)), Err(SolverError::NoIterations)));
    }
}
