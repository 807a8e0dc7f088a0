//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use icgalp::baseline::{dykstra, DEFAULT_MAX_ITER};
use icgalp::config::{OracleConfig, ProblemConfig};
use icgalp::diagnostics::{trace_slope, write_trace_to, RateSlope, TraceRecord};
use icgalp::experiment::{build_spec, run_oracle, solve_baseline, ProjectionInstance};
use icgalp::oracles::{
    batch_oracle, summability_probe, sweeping_oracle, ErrorSample, GradientOracle, LeastSquaresSum, OracleKind,
    ProjectionLoss,
};
use icgalp::proximal::{moreau_gradient, moreau_value, L1Norm, Prox, SquaredL2, Zero};
use icgalp::schedules::{make_default_schedule, validate, Assumption, Parameters, Preset, Schedule};
use icgalp::solver::{self, RunOptions, SolverState};
use icgalp::Vector;
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Collects named sub-checks of one criterion.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.0.push((label.into(), ok));
    }

    fn verdict(self) -> Verdict {
        let passed = self.0.iter().all(|c| c.1);
        let detail = self
            .0
            .iter()
            .map(|(l, ok)| format!("{}{l}", if *ok { "" } else { "FAILED " }))
            .collect::<Vec<_>>()
            .join("; ");
        Verdict::new(passed, detail)
    }
}

fn projection_problem(n: usize, data_seed: u64) -> (ProjectionInstance, ProblemConfig) {
    let cfg = ProblemConfig { n, m: 2, data_seed, target: None, constraint: None, radius: 1.0 };
    (ProjectionInstance::generate(&cfg).expect("instance"), cfg)
}

fn fig1() -> Schedule {
    Schedule::from_preset(Preset::Fig1)
}

fn slope_value(s: RateSlope) -> f64 {
    match s {
        RateSlope::Slope(m) => m,
        RateSlope::BelowFloor => f64::NEG_INFINITY,
    }
}

fn feasibility_rate() -> Verdict {
    let (inst, _) = projection_problem(128, 0);
    let sched = fig1();
    let start = Instant::now();
    let out = run_oracle(&inst, &sched, &OracleConfig::default(), 0, &RunOptions::new(10_000)).expect("run");
    let elapsed = start.elapsed();
    let slope = slope_value(trace_slope(&out.trace, |r| Some(r.feas_sq_erg_xip1)).expect("slope"));
    let mut c = Checks::default();
    c.check(format!("slope of ‖Ax̄-b‖² vs Γ = {slope:.3} (≤ -0.8)"), slope <= -0.8);
    c.check(format!("runtime {:.2}s (< 30s)", elapsed.as_secs_f64()), elapsed < Duration::from_secs(30));
    c.verdict()
}

fn final_dist(trace: &[TraceRecord]) -> f64 {
    trace.last().and_then(|r| r.dist_sq_erg).expect("reference distance")
}

fn ergodic_optimality() -> Verdict {
    let (inst, cfg) = projection_problem(128, 0);
    let (_, _, file) = solve_baseline(&inst, &cfg, 1e-12, DEFAULT_MAX_ITER).expect("baseline");
    let sched = fig1();
    let mut opts = RunOptions::new(10_000);
    opts.reference = Some(file.reference());

    let exact = run_oracle(&inst, &sched, &OracleConfig::default(), 0, &opts).expect("exact run");
    let tail: Vec<f64> = exact.trace.iter().filter(|r| r.k + 1 >= 1_000).filter_map(|r| r.dist_sq_erg).collect();
    let mut diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(f64::total_cmp);
    let median = diffs[diffs.len() / 2];
    let d_exact = final_dist(&exact.trace);

    let mut c = Checks::default();
    c.check(format!("median tail difference {median:.3e} (< 0)"), median < 0.0);
    c.check(format!("exact final dist_sq_erg {d_exact:.3e} (≤ 1e-3)"), d_exact <= 1e-3);

    let variants: Vec<(&str, OracleConfig)> = vec![
        ("batch", OracleConfig { kind: OracleKind::Batch, ..Default::default() }),
        ("vr_b1", OracleConfig { kind: OracleKind::VarianceReduced, batch: 1, ..Default::default() }),
        ("vr_b64", OracleConfig { kind: OracleKind::VarianceReduced, batch: 64, ..Default::default() }),
        ("vr_b256", OracleConfig { kind: OracleKind::VarianceReduced, batch: 256, ..Default::default() }),
        ("sweeping", OracleConfig { kind: OracleKind::Sweeping, ..Default::default() }),
    ];
    for (label, oracle) in variants {
        let out = run_oracle(&inst, &sched, &oracle, 7, &opts).expect("inexact run");
        let d = final_dist(&out.trace);
        c.check(format!("{label} {d:.3e} (≤ 10x exact)"), d <= 10.0 * d_exact);
    }
    c.verdict()
}

fn oracle_statistics() -> Verdict {
    let mut c = Checks::default();
    let mut r = common::rng(11);
    let sched = fig1();

    // Unbiasedness: 10⁴ draws at a fixed point and iteration.
    let y = common::gaussian_vector(&mut r, 8);
    let x = common::point_with_l1_norm(&mut r, 8, 0.7);
    let loss = ProjectionLoss { target: y.clone() };
    let mut oracle = batch_oracle(loss.clone(), sched, 1.0, 12);
    let exact = oracle.exact_gradient(&x);
    let draws: Vec<Vector> = (0..10_000).map(|_| oracle.next_gradient(&x, 1).gradient).collect();
    let worst = (0..8)
        .map(|j| {
            let col: Vec<f64> = draws.iter().map(|g| g[j]).collect();
            let (mean, se) = common::mean_and_se(&col);
            (mean - exact[j]).abs() / se
        })
        .fold(0.0, f64::max);
    c.check(format!("batch mean within {worst:.2} SE (≤ 3)"), worst <= 3.0);

    // Error decay with the sample count: k = 0 has γ = 1, so n(0) = alpha_factor.
    let y = common::gaussian_vector(&mut r, 64);
    let x = common::point_with_l1_norm(&mut r, 64, 0.5);
    let loss = ProjectionLoss { target: y };
    let mean_err = |factor: f64, seed: u64| {
        let mut o = batch_oracle(loss.clone(), sched, factor, seed);
        let g = o.exact_gradient(&x);
        let errs: Vec<f64> = (0..2_000).map(|_| (o.next_gradient(&x, 0).gradient - &g).norm()).collect();
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    let (e10, e100, e1000) = (mean_err(10.0, 21), mean_err(100.0, 22), mean_err(1000.0, 23));
    let within = |ratio: f64, target: f64| (ratio / target - 1.0).abs() <= 0.3;
    let r10 = e10 / e100;
    let r100 = e10 / e1000;
    c.check(format!("10x samples: error ratio {r10:.3} (√10 ± 30%)"), within(r10, 10f64.sqrt()));
    c.check(format!("100x samples: error ratio {r100:.3} (10 ± 30%)"), within(r100, 10.0));

    // Sweeping exactness once the iterate has been frozen for 2n iterations.
    let n = 16;
    let design = common::gaussian_matrix(&mut r, n, 5);
    let response = common::gaussian_vector(&mut r, n);
    let x = common::gaussian_vector(&mut r, 5);
    let mut sweep = sweeping_oracle(LeastSquaresSum { design, response }).expect("oracle");
    let exact = sweep.exact_gradient(&x);
    let scale = 1.0 + exact.amax();
    let mut worst_dev: f64 = 0.0;
    for k in 0..3 * n {
        let g = sweep.next_gradient(&x, k).gradient;
        if k + 1 >= 2 * n {
            worst_dev = worst_dev.max((g - &exact).amax() / scale);
        }
    }
    c.check(format!("sweeping deviation {worst_dev:.1e} (≤ 1e-14)"), worst_dev <= 1e-14);
    c.verdict()
}

fn error_trace(inst: &ProjectionInstance, sched: &Schedule, oracle: &OracleConfig, seed: u64, iters: usize) -> Vec<f64> {
    let mut spec = build_spec(inst, sched, oracle, seed).expect("spec");
    let mut state = SolverState::initial(&spec);
    (0..iters).map(|_| solver::step(&mut spec, sched, &mut state).expect("step").err_norm).collect()
}

fn samples(sched: &Schedule, errs: &[f64]) -> Vec<ErrorSample> {
    errs.iter().enumerate().map(|(k, &e)| ErrorSample { k, gamma: sched.gamma(k), err_norm: e }).collect()
}

fn summability() -> Verdict {
    let (inst, _) = projection_problem(128, 0);
    let sched = make_default_schedule(0.24).expect("schedule");
    let mut c = Checks::default();

    let batch = OracleConfig { kind: OracleKind::Batch, alpha_factor: 1.0, ..Default::default() };
    let errs = error_trace(&inst, &sched, &batch, 0, 10_000);
    let report = summability_probe(&samples(&sched, &errs)).expect("probe");
    c.check(format!("batch slope {:.4} (< -1)", report.tail_slope.unwrap_or(f64::NAN)), report.passed);

    // The condition concerns E‖Λ_k‖: average the error over independent
    // oracle seeds before fitting.
    let vr = OracleConfig { kind: OracleKind::VarianceReduced, alpha: 2.0 / 3.0, batch: 1, ..Default::default() };
    let (replicas, iters) = (64u64, 100_000);
    let mut mean = vec![0.0; iters];
    for seed in 0..replicas {
        for (m, e) in mean.iter_mut().zip(error_trace(&inst, &sched, &vr, seed, iters)) {
            *m += e / replicas as f64;
        }
    }
    let report = summability_probe(&samples(&sched, &mean)).expect("probe");
    c.check(
        format!("variance-reduced slope {:.4} over {replicas} seeds (< -1)", report.tail_slope.unwrap_or(f64::NAN)),
        report.passed,
    );
    c.verdict()
}

fn schedule_validator() -> Verdict {
    let mut c = Checks::default();
    for p in [Preset::Fig1, Preset::Fig2] {
        let report = validate(&Schedule::from_preset(p), 100_000);
        c.check(format!("{p:?} passes: {}", report.passed), report.passed);
    }
    let base = make_default_schedule(0.24).expect("schedule");
    let slow_smoothing = Schedule { a: 1.0 - base.b, ..base };
    let weak_penalty = Schedule { rho: 1.0, ..base };
    let b = -0.2;
    let summable = Schedule { b, a: (1.0 - b) / 2.0, c: 1.0, rho: 2f64.powf(2.0 - b) + 1.0, zeta_exponent: 2.0 };
    for (label, s, expected) in [
        ("a = 1-b", slow_smoothing, Assumption::P1),
        ("rho = 1", weak_penalty, Assumption::P6),
        ("b = -0.2", summable, Assumption::P2),
    ] {
        let failed = validate(&s, 100_000).failed();
        c.check(format!("{label} fails {failed:?} (expected [{expected}])"), failed == vec![expected]);
    }
    c.verdict()
}

fn baseline_correctness() -> Verdict {
    let mut c = Checks::default();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let inst = common::small_instance(seed);
        let got = dykstra(&inst.y, &inst.a, &inst.b, 1.0, 1e-12, DEFAULT_MAX_ITER).expect("dykstra");
        let grid = common::grid_minimizer(&inst);
        worst = worst.max((got.x_star - grid).amax());
    }
    c.check(format!("10 grid instances, worst ℓ∞ gap {worst:.2e} (≤ 2e-3)"), worst <= 2e-3);

    let (inst, cfg) = projection_problem(1024, 0);
    let (_, cert, _) = solve_baseline(&inst, &cfg, 1e-12, DEFAULT_MAX_ITER).expect("baseline");
    c.check(format!("KKT residual at n = 1024: {:.2e} (≤ 1e-8)", cert.residual), cert.residual <= 1e-8);
    c.verdict()
}

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-5 * lhs.abs().max(rhs.abs()).max(1.0)
}

fn moreau_suite() -> Verdict {
    let proxes: Vec<(&str, Box<dyn Prox>)> =
        vec![("zero", Box::new(Zero)), ("l1", Box::new(L1Norm::new(0.7))), ("sq_l2", Box::new(SquaredL2::new(1.3)))];
    let mut c = Checks::default();
    for (name, p) in &proxes {
        let mut r = common::rng(99);
        let mut failures = 0;
        for _ in 0..1_000 {
            let dim = 5;
            let x = common::gaussian_vector(&mut r, dim) * 2.0;
            let y = common::gaussian_vector(&mut r, dim) * 2.0;
            let beta: f64 = r.random_range(0.05..2.0);
            let beta_small = beta * r.random_range(0.1..0.9);

            let (px, py) = (p.prox(&x, beta), p.prox(&y, beta));
            let dp = &px - &py;
            let firm = le(dp.norm_squared(), dp.dot(&(&x - &y)));

            let gx = moreau_gradient(p.as_ref(), &x, beta).unwrap();
            let gy = moreau_gradient(p.as_ref(), &y, beta).unwrap();
            let lipschitz = le((&gx - &gy).norm(), (&x - &y).norm() / beta);

            let env = moreau_value(p.as_ref(), &x, beta).unwrap();
            let env_small = moreau_value(p.as_ref(), &x, beta_small).unwrap();
            let g_small = moreau_gradient(p.as_ref(), &x, beta_small).unwrap();
            let monotone = le(0.0, env_small - env)
                && le(env_small - env, 0.5 * (beta - beta_small) * g_small.norm_squared());

            let h = 1e-6;
            let fd = Vector::from_fn(dim, |i, _| {
                let mut e = Vector::zeros(dim);
                e[i] = h;
                (moreau_value(p.as_ref(), &(&x + &e), beta).unwrap() - moreau_value(p.as_ref(), &(&x - &e), beta).unwrap())
                    / (2.0 * h)
            });
            let finite_difference = (fd - &gx).norm() <= 1e-5 * gx.norm().max(1.0);

            let mut subgradient = true;
            if *name == "l1" {
                let l1 = L1Norm::new(0.7);
                let g = l1.value(&x).unwrap();
                let sub = l1.min_norm_subgradient(&x);
                subgradient = le(0.0, g - env) && le(g - env, 0.5 * beta * sub.norm_squared());
            }
            if !(firm && lipschitz && monotone && finite_difference && subgradient) {
                failures += 1;
            }
        }
        c.check(format!("{name}: {failures}/1000 points violate an inequality"), failures == 0);
    }
    c.verdict()
}

fn trace_bytes(inst: &ProjectionInstance, oracle: &OracleConfig, seed: u64, opts: &RunOptions) -> Vec<u8> {
    let out = run_oracle(inst, &fig1(), oracle, seed, opts).expect("run");
    let mut buf = Vec::new();
    write_trace_to(&out.trace, &mut buf).expect("write");
    buf
}

fn reproducibility() -> Verdict {
    let (inst, cfg) = projection_problem(64, 3);
    let (_, _, file) = solve_baseline(&inst, &cfg, 1e-12, DEFAULT_MAX_ITER).expect("baseline");
    let mut opts = RunOptions::new(2_000);
    opts.reference = Some(file.reference());
    let mut c = Checks::default();
    let configs = [
        OracleConfig { kind: OracleKind::Batch, ..Default::default() },
        OracleConfig { kind: OracleKind::VarianceReduced, batch: 1, ..Default::default() },
        OracleConfig { kind: OracleKind::VarianceReduced, batch: 64, sample_quadratic: true, ..Default::default() },
        OracleConfig { kind: OracleKind::Sweeping, ..Default::default() },
    ];
    for oracle in configs {
        let first = trace_bytes(&inst, &oracle, 5, &opts);
        let second = trace_bytes(&inst, &oracle, 5, &opts);
        let label = format!("{}{}", oracle.kind, if oracle.sample_quadratic { "+quad" } else { "" });
        c.check(format!("{label} identical"), first == second);
        if oracle.kind != OracleKind::Sweeping {
            let other = trace_bytes(&inst, &oracle, 6, &opts);
            c.check(format!("{label} seed-sensitive"), first != other);
        }
    }
    c.verdict()
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("feasibility_rate", feasibility_rate),
        ("ergodic_optimality", ergodic_optimality),
        ("oracle_statistics", oracle_statistics),
        ("summability", summability),
        ("schedule_validator", schedule_validator),
        ("baseline_correctness", baseline_correctness),
        ("moreau_properties", moreau_suite),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Verdict::new(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        if !verdict.passed {
            failed += 1;
        }
        println!(
            "{} {name} [{:.1}s] {}",
            if verdict.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
