//! Per-iteration trace records, the CSV trace format, and rate slopes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Column names of the trace file, in order.
pub const TRACE_HEADER: [&str; 12] = [
    "k",
    "gamma_k",
    "Gamma_k",
    "feas_sq",
    "feas_sq_erg_xi",
    "feas_sq_erg_xip1",
    "obj",
    "obj_gap_erg",
    "dist_sq_erg",
    "lag_gap_erg",
    "err_norm",
    "samples_used",
];

/// One row of a trace, describing the state after iteration `k`.
///
/// `feas_sq` is `‖A x_{k+1} - b‖²`. The two ergodic averages are
/// `Σ_{i≤k} γ_i x_i / Γ_k` (`_xi`) and `Σ_{i≤k} γ_i x_{i+1} / Γ_k` (`_xip1`);
/// the gap and distance columns use the latter.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub gamma_k: f64,
    pub gamma_sum: f64,
    pub feas_sq: f64,
    pub feas_sq_erg_xi: f64,
    pub feas_sq_erg_xip1: f64,
    pub obj: Option<f64>,
    pub obj_gap_erg: Option<f64>,
    pub dist_sq_erg: Option<f64>,
    pub lag_gap_erg: Option<f64>,
    pub err_norm: Option<f64>,
    pub samples_used: usize,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected trace header; expected columns: {}", TRACE_HEADER.join(","))]
    Header,
    #[error("row {row}: expected {expected} fields, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Field { row: usize, column: &'static str, value: String },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TraceRecord {
    fn fields(&self) -> [String; 12] {
        [
            self.k.to_string(),
            self.gamma_k.to_string(),
            self.gamma_sum.to_string(),
            self.feas_sq.to_string(),
            self.feas_sq_erg_xi.to_string(),
            self.feas_sq_erg_xip1.to_string(),
            fmt_opt(self.obj),
            fmt_opt(self.obj_gap_erg),
            fmt_opt(self.dist_sq_erg),
            fmt_opt(self.lag_gap_erg),
            fmt_opt(self.err_norm),
            self.samples_used.to_string(),
        ]
    }

    fn parse(row: usize, rec: &csv::StringRecord) -> Result<Self, TraceError> {
        if rec.len() != TRACE_HEADER.len() {
            return Err(TraceError::ColumnCount { row, expected: TRACE_HEADER.len(), found: rec.len() });
        }
        let bad = |c: usize| TraceError::Field { row, column: TRACE_HEADER[c], value: rec[c].to_string() };
        let real = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
        let opt = |c: usize| {
            if rec[c].is_empty() {
                Ok(None)
            } else {
                rec[c].parse::<f64>().map(Some).map_err(|_| bad(c))
            }
        };
        let count = |c: usize| rec[c].parse::<usize>().map_err(|_| bad(c));
        Ok(Self {
            k: count(0)?,
            gamma_k: real(1)?,
            gamma_sum: real(2)?,
            feas_sq: real(3)?,
            feas_sq_erg_xi: real(4)?,
            feas_sq_erg_xip1: real(5)?,
            obj: opt(6)?,
            obj_gap_erg: opt(7)?,
            dist_sq_erg: opt(8)?,
            lag_gap_erg: opt(9)?,
            err_norm: opt(10)?,
            samples_used: count(11)?,
        })
    }
}

pub fn write_trace_to<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_from<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = rd.records();
    match rows.next() {
        Some(h) => {
            let h = h?;
            if h.iter().ne(TRACE_HEADER.iter().copied()) {
                return Err(TraceError::Header);
            }
        }
        None => return Err(TraceError::Header),
    }
    rows.enumerate().map(|(i, rec)| TraceRecord::parse(i + 1, &rec?)).collect()
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<(), TraceError> {
    write_trace_to(records, BufWriter::new(File::create(path)?))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace_from(BufReader::new(File::open(path)?))
}

/// Ordinary least-squares slope of `y` on `x`. `None` for fewer than two
/// points or zero spread in `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSlope {
    Slope(f64),
    /// The metric reached exactly zero in the fitting window.
    BelowFloor,
}

impl RateSlope {
    pub fn value(self) -> Option<f64> {
        match self {
            RateSlope::Slope(m) => Some(m),
            RateSlope::BelowFloor => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SlopeError {
    #[error("rate fit needs at least 50 records, got {0}")]
    TooFew(usize),
    #[error("metric is negative or not finite at record {0}")]
    InvalidMetric(usize),
}

/// Slope of `log(metric)` against `log(Γ_k)` over the tail half of `points`
/// given as `(Γ_k, metric)`.
pub fn rate_slope(points: &[(f64, f64)]) -> Result<RateSlope, SlopeError> {
    if points.len() < 50 {
        return Err(SlopeError::TooFew(points.len()));
    }
    let start = points.len() / 2;
    let mut logs = Vec::with_capacity(points.len() - start);
    for (i, &(g, m)) in points.iter().enumerate().skip(start) {
        if !(m >= 0.0 && m.is_finite() && g > 0.0) {
            return Err(SlopeError::InvalidMetric(i));
        }
        if m == 0.0 {
            return Ok(RateSlope::BelowFloor);
        }
        logs.push((g.ln(), m.ln()));
    }
    Ok(least_squares_slope(&logs).map_or(RateSlope::Slope(0.0), RateSlope::Slope))
}

/// Convenience: fit a column of a trace against `Γ_k`.
pub fn trace_slope(
    records: &[TraceRecord],
    metric: impl Fn(&TraceRecord) -> Option<f64>,
) -> Result<RateSlope, SlopeError> {
    let pts: Vec<_> = records.iter().filter_map(|r| metric(r).map(|m| (r.gamma_sum, m))).collect();
    rate_slope(&pts)
}
