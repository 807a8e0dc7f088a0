//! Run configuration, stored as JSON.
//!
//! ```json
//! {
//!   "problem":  { "n": 1024, "m": 2, "data_seed": 1 },
//!   "schedule": { "preset": "fig1" },
//!   "oracle":   { "kind": "variance_reduced", "alpha": 0.6667, "batch": 64 },
//!   "run":      { "iterations": 100000, "seed": 7, "trace_every": 10, "out_path": "out" }
//! }
//! ```
//!
//! Unknown keys are rejected. The smooth term is `f(x) = ‖x - y‖² / (2n)`,
//! sampled one coordinate at a time; its `1/n` factor is applied by the
//! finite-sum mean, not by the summands.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracles::OracleKind;
use crate::schedules::{make_default_schedule, Preset, Schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid config: {0}")]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub data_seed: u64,
    /// Explicit target `y`; replaces the random one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    /// Explicit rows of `A`; replaces the random matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_n() -> usize {
    1024
}
fn default_m() -> usize {
    2
}
fn default_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_exponent: Option<f64>,
}

impl ScheduleConfig {
    pub fn preset(preset: Preset) -> Self {
        Self { preset: Some(preset), ..Self::default() }
    }

    /// Default schedule for the chosen `b`, with any explicit overrides.
    pub fn resolve(&self) -> Result<Schedule, ConfigError> {
        let b = match (self.b, self.preset) {
            (Some(b), Some(p)) if b != p.b() => {
                return Err(ConfigError::Invalid(format!(
                    "schedule.b = {b} conflicts with preset {p:?} (b = {})",
                    p.b()
                )))
            }
            (Some(b), _) => b,
            (None, Some(p)) => p.b(),
            (None, None) => return Err(ConfigError::Invalid("schedule needs `b` or `preset`".into())),
        };
        let mut s = make_default_schedule(b)?;
        if let Some(a) = self.a {
            s.a = a;
        }
        if let Some(c) = self.c {
            s.c = c;
        }
        if let Some(rho) = self.rho {
            s.rho = rho;
        }
        if let Some(z) = self.zeta_exponent {
            s.zeta_exponent = z;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_kind")]
    pub kind: OracleKind,
    /// Weight exponent of the variance-reduced oracle, `ν_k = γ_k^alpha`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fixed sample size of the variance-reduced oracle.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Multiplier of the growing batch size.
    #[serde(default = "default_alpha_factor")]
    pub alpha_factor: f64,
    /// Sample the augmented Lagrangian gradient together with `∇f`.
    #[serde(default)]
    pub sample_quadratic: bool,
}

fn default_kind() -> OracleKind {
    OracleKind::Exact
}
fn default_alpha() -> f64 {
    2.0 / 3.0
}
fn default_batch() -> usize {
    1
}
fn default_alpha_factor() -> f64 {
    1.0
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            alpha: default_alpha(),
            batch: default_batch(),
            alpha_factor: default_alpha_factor(),
            sample_quadratic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    #[serde(default = "default_out")]
    pub out_path: String,
}

fn default_trace_every() -> usize {
    1
}
fn default_out() -> String {
    "out".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if p.n == 0 || p.m == 0 {
            return bad("problem.n and problem.m must be positive".into());
        }
        if p.m > p.n {
            return bad(format!("problem.m = {} exceeds problem.n = {}", p.m, p.n));
        }
        if !(p.radius > 0.0) {
            return bad(format!("problem.radius = {} must be positive", p.radius));
        }
        if let Some(y) = &p.target {
            if y.len() != p.n {
                return bad(format!("problem.target has {} entries, expected n = {}", y.len(), p.n));
            }
        }
        if let Some(rows) = &p.constraint {
            if rows.len() != p.m || rows.iter().any(|r| r.len() != p.n) {
                return bad(format!("problem.constraint must be {} rows of length {}", p.m, p.n));
            }
        }
        self.schedule.resolve()?;
        let o = &self.oracle;
        if o.kind == OracleKind::VarianceReduced && !(o.alpha > 0.0 && o.alpha < 1.0) {
            return bad(format!("oracle.alpha = {} must lie in (0, 1)", o.alpha));
        }
        if o.batch == 0 {
            return bad("oracle.batch must be at least 1".into());
        }
        if !(o.alpha_factor > 0.0) {
            return bad(format!("oracle.alpha_factor = {} must be positive", o.alpha_factor));
        }
        if self.run.iterations == 0 {
            return bad("run.iterations must be at least 1".into());
        }
        if self.run.trace_every == 0 {
            return bad("run.trace_every must be at least 1".into());
        }
        Ok(())
    }
}
