//! CSV outputs: the per-hypothesis audit log, the aggregate table, and
//! replay verification of audit logs.
//!
//! Both files start with `#` comment lines. The first names the schema and
//! its version; the audit log also records the FDR settings needed to replay
//! the levels. Floats are written with 9 significant digits.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{AggregateRow, ScenarioConfig};
use crate::metrics::{self, Decision, ExperimentRecord, Truth};
use crate::online_fdr::{FdrKind, FdrState};

pub const AUDIT_SCHEMA: &str = "mabfdr-audit/1";
pub const AGGREGATE_SCHEMA: &str = "mabfdr-aggregate/1";

pub const AUDIT_COLUMNS: [&str; 11] = [
    "run_id",
    "j",
    "truth",
    "alpha_j",
    "pvalue",
    "rejected",
    "returned_arm",
    "samples",
    "truncated",
    "wealth_after",
    "correct",
];

pub const AGGREGATE_COLUMNS: [&str; 11] = [
    "method",
    "fdr_procedure",
    "scenario_id",
    "J",
    "runs",
    "mfdr",
    "fdr_mean",
    "bdr",
    "mean_samples",
    "truncation",
    "arms",
];

/// Float with 9 significant digits.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes the audit log of all runs; rows ordered by run, then hypothesis.
pub fn write_audit<W: Write>(
    mut out: W,
    config: &ScenarioConfig,
    runs: &[Vec<ExperimentRecord>],
) -> Result<()> {
    writeln!(out, "# schema={AUDIT_SCHEMA}")?;
    writeln!(
        out,
        "# fdr={} alpha={:?} w0={:?} epsilon={:?} method={} scenario={}",
        config.effective_fdr(),
        config.alpha,
        config.initial_wealth(),
        config.epsilon,
        config.method,
        config.scenario_id()
    )?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(AUDIT_COLUMNS)?;
    for (run_id, run) in runs.iter().enumerate() {
        for rec in run {
            w.write_record([
                run_id.to_string(),
                rec.j.to_string(),
                rec.truth.to_string(),
                format_float(rec.alpha_j),
                format_float(rec.pvalue),
                flag(rec.rejected).to_string(),
                rec.returned_arm.map(|a| a.to_string()).unwrap_or_default(),
                rec.samples.to_string(),
                flag(rec.truncated).to_string(),
                format_float(rec.wealth_after),
                flag(rec.is_best_arm_discovery(config.epsilon)).to_string(),
            ])?;
        }
        w.flush()?;
    }
    w.flush()?;
    Ok(())
}

fn aggregate_fields(row: &AggregateRow) -> [String; 11] {
    [
        row.method.clone(),
        row.fdr_procedure.clone(),
        row.scenario_id.clone(),
        row.hypotheses.to_string(),
        row.runs.to_string(),
        format_float(row.mfdr),
        format_float(row.fdr_mean),
        format_float(row.bdr),
        format_float(row.mean_samples),
        row.truncation
            .map(|m| m.to_string())
            .unwrap_or_else(|| "inf".into()),
        row.arms.to_string(),
    ]
}

/// Incremental writer of the aggregate table.
pub struct AggregateWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> AggregateWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "# schema={AGGREGATE_SCHEMA}")?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(AGGREGATE_COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &AggregateRow) -> Result<()> {
        self.inner.write_record(aggregate_fields(row))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_aggregate<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = AggregateWriter::new(out)?;
    for row in rows {
        w.write(row)?;
    }
    Ok(())
}

/// One parsed audit row.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub run_id: u64,
    pub j: u64,
    pub truth: Truth,
    pub alpha_j: f64,
    pub pvalue: f64,
    pub rejected: bool,
    pub returned_arm: Option<usize>,
    pub samples: u64,
    pub truncated: bool,
    pub wealth_after: f64,
    pub correct: bool,
}

impl Decision for AuditRow {
    fn truth(&self) -> Truth {
        self.truth
    }

    fn rejected(&self) -> bool {
        self.rejected
    }
}

/// FDR settings recorded in the audit header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub fdr: FdrKind,
    pub alpha: f64,
    pub w0: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLog {
    pub settings: AuditSettings,
    /// Rows grouped by run, in file order.
    pub runs: Vec<Vec<AuditRow>>,
}

fn schema_error(msg: impl Into<String>) -> Error {
    Error::data(msg)
}

fn parse_settings(comments: &[&str]) -> Result<AuditSettings> {
    if !comments
        .iter()
        .any(|c| c.trim() == format!("schema={AUDIT_SCHEMA}"))
    {
        return Err(schema_error(format!(
            "missing '# schema={AUDIT_SCHEMA}' line"
        )));
    }
    let mut fdr = None;
    let (mut alpha, mut w0, mut epsilon) = (None, None, None);
    for token in comments.iter().flat_map(|c| c.split_whitespace()) {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| schema_error(format!("bad value for {key}: '{value}'")))
        };
        match key {
            "fdr" => {
                fdr = Some(
                    value
                        .parse::<FdrKind>()
                        .map_err(|e| schema_error(e.to_string()))?,
                )
            }
            "alpha" => alpha = Some(num()?),
            "w0" => w0 = Some(num()?),
            "epsilon" => epsilon = Some(num()?),
            _ => {}
        }
    }
    match (fdr, alpha, w0) {
        (Some(fdr), Some(alpha), Some(w0)) => Ok(AuditSettings {
            fdr,
            alpha,
            w0,
            epsilon: epsilon.unwrap_or(0.0),
        }),
        _ => Err(schema_error("audit header lacks fdr, alpha or w0 settings")),
    }
}

fn parse_flag(s: &str, line: u64) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(schema_error(format!(
            "line {line}: expected 0 or 1, got '{other}'"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, column: &str, line: u64) -> Result<T> {
    s.parse()
        .map_err(|_| schema_error(format!("line {line}: bad {column} '{s}'")))
}

impl AuditLog {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(schema_error("audit file is empty"));
        }
        let comments: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix('#')).collect();
        let settings = parse_settings(&comments)?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != AUDIT_COLUMNS {
            return Err(schema_error(format!(
                "audit header mismatch: expected {}, got {}",
                AUDIT_COLUMNS.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut runs: Vec<Vec<AuditRow>> = Vec::new();
        let mut last_run = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let f = |i: usize| record.get(i).unwrap_or("");
            let row = AuditRow {
                run_id: parse_num(f(0), "run_id", line)?,
                j: parse_num(f(1), "j", line)?,
                truth: f(2)
                    .parse()
                    .map_err(|_| schema_error(format!("line {line}: bad truth '{}'", f(2))))?,
                alpha_j: parse_num(f(3), "alpha_j", line)?,
                pvalue: parse_num(f(4), "pvalue", line)?,
                rejected: parse_flag(f(5), line)?,
                returned_arm: if f(6).is_empty() {
                    None
                } else {
                    Some(parse_num(f(6), "returned_arm", line)?)
                },
                samples: parse_num(f(7), "samples", line)?,
                truncated: parse_flag(f(8), line)?,
                wealth_after: parse_num(f(9), "wealth_after", line)?,
                correct: parse_flag(f(10), line)?,
            };
            if last_run != Some(row.run_id) {
                runs.push(Vec::new());
                last_run = Some(row.run_id);
            }
            runs.last_mut().expect("pushed above").push(row);
        }
        if runs.is_empty() {
            return Err(schema_error("audit file has no rows"));
        }
        Ok(Self { settings, runs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| schema_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Aggregate metrics recomputed from the log: (mfdr, fdr_mean, bdr, mean_samples).
    pub fn summary(&self) -> (f64, f64, f64, f64) {
        let j = self.runs.iter().map(Vec::len).max().unwrap_or(0);
        let n = self.runs.len() as f64;
        let bdr = self
            .runs
            .iter()
            .map(|run| {
                let non_nulls = run.iter().filter(|r| r.truth == Truth::NonNull).count();
                if non_nulls == 0 {
                    0.0
                } else {
                    run.iter().filter(|r| r.correct).count() as f64 / non_nulls as f64
                }
            })
            .sum::<f64>()
            / n;
        let samples = self
            .runs
            .iter()
            .map(|run| run.iter().map(|r| r.samples).sum::<u64>() as f64)
            .sum::<f64>()
            / n;
        (
            metrics::mfdr_estimate(&self.runs, j),
            metrics::fdr_estimate(&self.runs, j),
            bdr,
            samples,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchKind {
    /// Recorded level differs from the level implied by earlier decisions.
    Alpha,
    /// Recorded decision differs from `pvalue <= alpha_j` and a non-control arm.
    Rejection,
    /// Recorded wealth differs from the replayed wealth.
    Wealth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub run_id: u64,
    pub j: u64,
    pub kind: MismatchKind,
    pub recorded: f64,
    pub expected: f64,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run {} hypothesis {}: {:?} recorded {} but replay gives {}",
            self.run_id, self.j, self.kind, self.recorded, self.expected
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub rows: usize,
    pub runs: usize,
    /// All mismatches in file order.
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn first(&self) -> Option<&Mismatch> {
        self.mismatches.first()
    }

    pub fn first_of(&self, kind: MismatchKind) -> Option<&Mismatch> {
        self.mismatches.iter().find(|m| m.kind == kind)
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.first() {
            None => write!(f, "consistent ({} runs, {} rows)", self.runs, self.rows),
            Some(m) => write!(
                f,
                "mismatch: {m} ({} mismatches in total)",
                self.mismatches.len()
            ),
        }
    }
}

/// Relative agreement up to the 9-digit serialization.
fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) + 1e-15
}

/// Recomputes every level from the recorded decisions and every decision from
/// the recorded p-value and level.
pub fn replay(log: &AuditLog) -> Result<ReplayReport> {
    let s = log.settings;
    let mut mismatches = Vec::new();
    let mut rows = 0;
    for run in &log.runs {
        let mut state = FdrState::with_initial_wealth(s.fdr, s.alpha, s.w0)?;
        for (idx, row) in run.iter().enumerate() {
            rows += 1;
            let push = |mismatches: &mut Vec<Mismatch>, kind, recorded, expected| {
                mismatches.push(Mismatch {
                    run_id: row.run_id,
                    j: row.j,
                    kind,
                    recorded,
                    expected,
                })
            };
            if row.j != idx as u64 + 1 {
                return Err(schema_error(format!(
                    "run {}: expected hypothesis {} but found {}",
                    row.run_id,
                    idx + 1,
                    row.j
                )));
            }
            let alpha = state.next_alpha();
            if !close(alpha, row.alpha_j) {
                push(&mut mismatches, MismatchKind::Alpha, row.alpha_j, alpha);
            }
            let arm_ok = row.returned_arm != Some(0);
            let ambiguous = close(row.pvalue, alpha);
            let decision = row.pvalue <= alpha && arm_ok;
            if !ambiguous && decision != row.rejected {
                push(
                    &mut mismatches,
                    MismatchKind::Rejection,
                    row.rejected as u8 as f64,
                    decision as u8 as f64,
                );
            }
            // Invariant violations in the replayed state surface as errors.
            let snap = state.record(row.rejected)?;
            if !close(snap.wealth_after, row.wealth_after) {
                push(
                    &mut mismatches,
                    MismatchKind::Wealth,
                    row.wealth_after,
                    snap.wealth_after,
                );
            }
        }
    }
    Ok(ReplayReport {
        rows,
        runs: log.runs.len(),
        mismatches,
    })
}
