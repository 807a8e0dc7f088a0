//! Command-line front end: schedule validation, baseline solves, single runs
//! and the full oracle comparison.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icgalp::baseline::DEFAULT_MAX_ITER;
use icgalp::config::{ConfigError, RunConfig};
use icgalp::diagnostics::{write_trace, TraceError};
use icgalp::experiment::{
    comparison_matrix, run_oracle, run_variants, solve_baseline, summary_csv, summary_table, variant_label,
    BaselineFile, ExperimentError, ProjectionInstance, SummaryRow,
};
use icgalp::schedules::{Parameters, ValidationScope};
use icgalp::solver::{RunOptions, SolverError};

const BASELINE_FILE: &str = "baseline.json";
/// Dykstra tolerance used for reference solutions.
const BASELINE_TOL: f64 = 1e-12;
/// Largest KKT residual accepted for a reference solution.
const KKT_LIMIT: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "icgalp", version, about = "Inexact conditional gradient with augmented Lagrangian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configured schedule against the step-size assumptions.
    Validate(Common),
    /// Solve the projection problem to high precision and store x* and μ*.
    Baseline(Common),
    /// Run the configured oracle and write its trace.
    Run(Common),
    /// Run every oracle variant against the stored baseline.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run.out_path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Oracle seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration count; overrides `run.iterations`.
    #[arg(long)]
    iters: Option<usize>,
    /// Skip the schedule validation gate.
    #[arg(long)]
    force: bool,
}

enum Failure {
    Usage(String),
    Quality(String),
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Quality(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Quality(m) | Failure::Diverged(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        Failure::Usage(format!("cannot write trace: {e}"))
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solver(SolverError::Diverged { .. }) => Failure::Diverged(e.to_string()),
            ExperimentError::Solver(SolverError::Unvalidated(_)) => {
                Failure::Quality(format!("{e}\nuse --force to run anyway"))
            }
            ExperimentError::Baseline(_) => Failure::Quality(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    force: bool,
}

impl Context {
    fn load(args: &Common) -> Result<Self, Failure> {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.run.seed = seed;
        }
        if let Some(iters) = args.iters {
            cfg.run.iterations = iters;
        }
        cfg.check()?;
        let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.run.out_path));
        Ok(Self { cfg, out, force: args.force })
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            iterations: self.cfg.run.iterations,
            trace_every: self.cfg.run.trace_every,
            force: self.force,
            reference: None,
        }
    }

    fn baseline(&self) -> Result<Option<BaselineFile>, Failure> {
        let path = self.out.join(BASELINE_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Failure::Usage(format!("cannot read {}: {e}", path.display()))),
        };
        let file = BaselineFile::from_json(&text)
            .map_err(|e| Failure::Usage(format!("invalid baseline file {}: {e}", path.display())))?;
        if !file.matches(&self.cfg.problem) {
            return Err(Failure::Usage(format!(
                "{} was computed for a different problem block (n = {}, m = {}, data_seed = {})",
                path.display(),
                file.n,
                file.m,
                file.data_seed
            )));
        }
        Ok(Some(file))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn validate(ctx: &Context) -> Result<(), Failure> {
    let schedule = ctx.cfg.schedule.resolve()?;
    let report = schedule.validate(ctx.cfg.run.iterations, ValidationScope { smoothing: false });
    println!("{report}");
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Quality(format!("schedule fails {:?}", report.failed())))
    }
}

fn baseline(ctx: &Context) -> Result<(), Failure> {
    let instance = ProjectionInstance::generate(&ctx.cfg.problem)?;
    let (result, cert, file) = solve_baseline(&instance, &ctx.cfg.problem, BASELINE_TOL, DEFAULT_MAX_ITER)?;
    let path = ctx.out_dir()?.join(BASELINE_FILE);
    write_file(&path, &(file.to_json() + "\n"))?;
    println!(
        "baseline: {} iterations, residual {:.3e}, KKT residual {:.3e}, wrote {}",
        result.iterations,
        result.residual,
        cert.residual,
        path.display()
    );
    if cert.residual > KKT_LIMIT {
        return Err(Failure::Quality(format!("KKT residual {:.3e} exceeds {KKT_LIMIT:.0e}", cert.residual)));
    }
    Ok(())
}

fn run(ctx: &Context) -> Result<(), Failure> {
    let schedule = ctx.cfg.schedule.resolve()?;
    let instance = ProjectionInstance::generate(&ctx.cfg.problem)?;
    let mut opts = ctx.options();
    opts.reference = ctx.baseline()?.map(|b| b.reference());
    let out = run_oracle(&instance, &schedule, &ctx.cfg.oracle, ctx.cfg.run.seed, &opts)?;
    let label = variant_label(&ctx.cfg.oracle);
    let path = ctx.out_dir()?.join(format!("{label}.csv"));
    write_trace(&out.trace, &path)?;
    print!("{}", summary_table(&[SummaryRow::from_run(&label, &out)]));
    println!("wrote {} ({} records)", path.display(), out.trace.len());
    Ok(())
}

fn compare(ctx: &Context) -> Result<(), Failure> {
    let baseline = ctx.baseline()?.ok_or_else(|| {
        Failure::Usage(format!(
            "no {BASELINE_FILE} in {}; run `icgalp baseline` with the same config first",
            ctx.out.display()
        ))
    })?;
    let schedule = ctx.cfg.schedule.resolve()?;
    let instance = ProjectionInstance::generate(&ctx.cfg.problem)?;
    let mut opts = ctx.options();
    opts.reference = Some(baseline.reference());
    let variants = comparison_matrix(ctx.cfg.oracle.alpha);
    let outputs = run_variants(&instance, &schedule, &variants, ctx.cfg.run.seed, &opts);

    let dir = ctx.out_dir()?;
    let mut rows = Vec::new();
    let mut diverged = Vec::new();
    for (variant, output) in variants.iter().zip(outputs) {
        match output {
            Ok(out) => {
                write_trace(&out.trace, dir.join(format!("{}.csv", variant.label)))?;
                rows.push(SummaryRow::from_run(&variant.label, &out));
            }
            Err(e) => {
                let failure = Failure::from(e);
                if !matches!(failure, Failure::Diverged(_)) {
                    return Err(failure);
                }
                diverged.push(format!("{}: {}", variant.label, failure.message()));
            }
        }
    }
    let table = summary_table(&rows);
    write_file(&dir.join("summary.txt"), &table)?;
    write_file(&dir.join("summary.csv"), &summary_csv(&rows))?;
    print!("{table}");
    if !diverged.is_empty() {
        return Err(Failure::Diverged(diverged.join("\n")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(args) => Context::load(args).and_then(|ctx| validate(&ctx)),
        Command::Baseline(args) => Context::load(args).and_then(|ctx| baseline(&ctx)),
        Command::Run(args) => Context::load(args).and_then(|ctx| run(&ctx)),
        Command::Compare(args) => Context::load(args).and_then(|ctx| compare(&ctx)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
