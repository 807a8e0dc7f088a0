//! Browser demo: schedule explorer, convergence curves and a 2-D iterate
//! path. Each operation is a plain function returning a serializable value;
//! the `wasm_bindgen` exports hand them to JavaScript as JSON strings.

use icgalp::baseline::DEFAULT_MAX_ITER;
use icgalp::config::{OracleConfig, ProblemConfig, ScheduleConfig};
use icgalp::experiment::{build_spec, run_oracle, solve_baseline, variant_label, ProjectionInstance};
use icgalp::oracles::OracleKind;
use icgalp::schedules::{Parameters, Schedule, ValidationScope};
use icgalp::solver::{self, RunOptions, SolverState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest iteration count the page may request.
pub const MAX_ITERATIONS: usize = 200_000;
/// Points per curve handed to the plot.
const CURVE_POINTS: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleCurves {
    pub k: Vec<usize>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub nu: Vec<f64>,
    pub rho: f64,
    pub a: f64,
    pub c: f64,
    pub passed: bool,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub label: String,
    pub k: Vec<usize>,
    pub feas_sq_erg: Vec<f64>,
    pub dist_sq_erg: Vec<f64>,
    pub err_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IteratePath {
    pub x: Vec<[f64; 2]>,
    pub ergodic: Vec<[f64; 2]>,
    pub x_star: [f64; 2],
    pub target: [f64; 2],
    /// Normal of the constraint line `a·x = 0`.
    pub normal: [f64; 2],
    pub radius: f64,
}

/// `count` distinct indices in `[0, horizon)`, roughly log-spaced.
pub fn log_indices(horizon: usize, count: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let top = (horizon as f64).ln();
    let mut out: Vec<usize> = (0..count)
        .map(|i| ((top * i as f64 / (count - 1).max(1) as f64).exp() - 1.0).round() as usize)
        .map(|k| k.min(horizon - 1))
        .collect();
    out.dedup();
    out
}

fn schedule(b: f64, rho: Option<f64>) -> Result<Schedule, String> {
    ScheduleConfig { b: Some(b), rho, ..Default::default() }.resolve().map_err(|e| e.to_string())
}

/// Parameter sequences for exponent `b` and their validation report.
/// `rho <= 0` keeps the default penalty.
pub fn explore_schedule(b: f64, rho: f64, alpha: f64, horizon: usize, smoothing: bool) -> Result<ScheduleCurves, String> {
    let s = schedule(b, (rho > 0.0).then_some(rho))?;
    let horizon = horizon.clamp(2, 10_000_000);
    let k = log_indices(horizon, CURVE_POINTS);
    let report = s.validate(horizon, ValidationScope { smoothing });
    Ok(ScheduleCurves {
        gamma: k.iter().map(|&i| s.gamma(i)).collect(),
        beta: k.iter().map(|&i| s.beta(i)).collect(),
        theta: k.iter().map(|&i| s.theta(i)).collect(),
        nu: k.iter().map(|&i| s.gamma(i).powf(alpha)).collect(),
        k,
        rho: s.rho,
        a: s.a,
        c: s.c,
        passed: report.passed,
        report: report.to_string(),
    })
}

fn oracle_config(kind: &str, batch: usize) -> Result<OracleConfig, String> {
    let kind = match kind {
        "exact" => OracleKind::Exact,
        "batch" => OracleKind::Batch,
        "variance_reduced" => OracleKind::VarianceReduced,
        "sweeping" => OracleKind::Sweeping,
        other => return Err(format!("unknown oracle `{other}`")),
    };
    Ok(OracleConfig { kind, batch: batch.max(1), ..Default::default() })
}

/// Runs one oracle on a random projection instance of dimension `n`.
pub fn convergence(
    n: usize,
    data_seed: u64,
    kind: &str,
    batch: usize,
    b: f64,
    iterations: usize,
    seed: u64,
) -> Result<Convergence, String> {
    if !(2..=4096).contains(&n) {
        return Err(format!("n = {n} must lie in [2, 4096]"));
    }
    let iterations = iterations.clamp(1, MAX_ITERATIONS);
    let problem = ProblemConfig { n, m: 2.min(n - 1), data_seed, target: None, constraint: None, radius: 1.0 };
    let instance = ProjectionInstance::generate(&problem).map_err(|e| e.to_string())?;
    let (_, _, file) = solve_baseline(&instance, &problem, 1e-12, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
    let s = schedule(b, None)?;
    let oracle = oracle_config(kind, batch)?;
    let mut opts = RunOptions::new(iterations);
    opts.trace_every = (iterations / 2_000).max(1);
    opts.reference = Some(file.reference());
    opts.force = true;
    let out = run_oracle(&instance, &s, &oracle, seed, &opts).map_err(|e| e.to_string())?;

    let keep = log_indices(out.trace.len(), CURVE_POINTS);
    let rows: Vec<_> = keep.iter().map(|&i| &out.trace[i]).collect();
    Ok(Convergence {
        label: variant_label(&oracle),
        k: rows.iter().map(|r| r.k + 1).collect(),
        feas_sq_erg: rows.iter().map(|r| r.feas_sq_erg_xip1).collect(),
        dist_sq_erg: rows.iter().map(|r| r.dist_sq_erg.unwrap_or(f64::NAN)).collect(),
        err_norm: rows.iter().map(|r| r.err_norm.unwrap_or(0.0)).collect(),
    })
}

/// Exact iterates projecting `target` onto `{‖x‖₁ ≤ 1, normal·x = 0}`.
pub fn iterate_path(target: [f64; 2], normal: [f64; 2], b: f64, iterations: usize) -> Result<IteratePath, String> {
    if normal[0] == 0.0 && normal[1] == 0.0 {
        return Err("the constraint normal must be nonzero".into());
    }
    let iterations = iterations.clamp(1, 20_000);
    let problem = ProblemConfig {
        n: 2,
        m: 1,
        data_seed: 0,
        target: Some(target.to_vec()),
        constraint: Some(vec![normal.to_vec()]),
        radius: 1.0,
    };
    let instance = ProjectionInstance::generate(&problem).map_err(|e| e.to_string())?;
    let (_, _, file) = solve_baseline(&instance, &problem, 1e-13, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
    let s = schedule(b, None)?;
    let mut spec = build_spec(&instance, &s, &OracleConfig::default(), 0).map_err(|e| e.to_string())?;
    let mut state = SolverState::initial(&spec);
    let point = |v: &icgalp::Vector| [v[0], v[1]];
    let mut x = vec![point(&state.x)];
    let mut ergodic = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        solver::step(&mut spec, &s, &mut state).map_err(|e| e.to_string())?;
        x.push(point(&state.x));
        ergodic.push(point(&state.ergodic()));
    }
    Ok(IteratePath {
        x,
        ergodic,
        x_star: [file.x_star[0], file.x_star[1]],
        target,
        normal,
        radius: 1.0,
    })
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = exploreSchedule)]
pub fn explore_schedule_js(b: f64, rho: f64, alpha: f64, horizon: usize, smoothing: bool) -> Result<String, JsError> {
    to_js(explore_schedule(b, rho, alpha, horizon, smoothing))
}

#[wasm_bindgen(js_name = convergence)]
pub fn convergence_js(
    n: usize,
    data_seed: u32,
    kind: &str,
    batch: usize,
    b: f64,
    iterations: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(convergence(n, data_seed.into(), kind, batch, b, iterations, seed.into()))
}

#[wasm_bindgen(js_name = iteratePath)]
pub fn iterate_path_js(tx: f64, ty: f64, nx: f64, ny: f64, b: f64, iterations: usize) -> Result<String, JsError> {
    to_js(iterate_path([tx, ty], [nx, ny], b, iterations))
}
