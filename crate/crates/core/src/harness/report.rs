use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::Scenario;
use super::HarnessError;
use crate::walk::WalkResiduals;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub bit_error_rate: f64,
    pub aborted: bool,
    /// Feedback evaluations before the abort.
    pub packages_to_abort: Option<u64>,
    pub feedback_evaluations: u64,
    pub basis_changes: u64,
    /// Fraction of intercepted bits Eve read correctly.
    pub eve_accuracy: Option<f64>,
    /// Leading run of correctly guessed turn bits (walk guesser only).
    pub eve_walk_streak: Option<u64>,
    pub latency_flags: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyMetrics {
    pub mean: [f64; 3],
    pub expected: [f64; 3],
    pub error: [f64; 3],
    pub std_error: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub session: Option<SessionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tomography: Option<TomographyMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub walk: Option<WalkResiduals>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionAggregate {
    pub mean_bit_error_rate: f64,
    pub abort_fraction: f64,
    pub mean_packages_to_abort: Option<f64>,
    pub mean_feedback_evaluations: f64,
    pub mean_basis_changes: f64,
    pub mean_eve_accuracy: Option<f64>,
    /// Fraction of seeds whose streak reached `survival_changes`.
    pub eve_walk_survival: Option<f64>,
    pub mean_latency_flags: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyAggregate {
    pub bias: [f64; 3],
    /// Sample standard deviation of the per-seed estimates.
    pub spread: [f64; 3],
    pub mean_std_error: [f64; 3],
    pub within_tolerance: [f64; 3],
    pub within_3se: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub session: Option<SessionAggregate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tomography: Option<TomographyAggregate>,
    /// Worst residual over all seeds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub walk: Option<WalkResiduals>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub name: String,
    pub scenario: Scenario,
    pub survival_changes: u64,
    pub tolerance: Option<f64>,
    pub rows: Vec<SeedRow>,
    pub aggregate: Aggregate,
    /// Wall-clock time; left out unless asked for, so reports stay
    /// byte-identical across runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duration_ms: Option<f64>,
}

impl SimReport {
    pub fn recompute_aggregate(&self) -> Aggregate {
        aggregate(&self.rows, self.survival_changes, self.tolerance)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn fraction<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().filter(|i| pred(i)).count() as f64 / items.len() as f64
}

/// Aggregate block computed from per-seed rows alone.
pub fn aggregate(rows: &[SeedRow], survival_changes: u64, tolerance: Option<f64>) -> Aggregate {
    let sessions: Vec<&SessionMetrics> = rows.iter().filter_map(|r| r.session.as_ref()).collect();
    let session = (!sessions.is_empty()).then(|| {
        let streaks: Vec<u64> = sessions.iter().filter_map(|s| s.eve_walk_streak).collect();
        SessionAggregate {
            mean_bit_error_rate: mean(sessions.iter().map(|s| s.bit_error_rate)).unwrap_or(0.0),
            abort_fraction: fraction(&sessions, |s| s.aborted),
            mean_packages_to_abort: mean(sessions.iter().filter_map(|s| s.packages_to_abort).map(|p| p as f64)),
            mean_feedback_evaluations: mean(sessions.iter().map(|s| s.feedback_evaluations as f64)).unwrap_or(0.0),
            mean_basis_changes: mean(sessions.iter().map(|s| s.basis_changes as f64)).unwrap_or(0.0),
            mean_eve_accuracy: mean(sessions.iter().filter_map(|s| s.eve_accuracy)),
            eve_walk_survival: (!streaks.is_empty()).then(|| fraction(&streaks, |s| *s >= survival_changes)),
            mean_latency_flags: mean(sessions.iter().map(|s| s.latency_flags as f64)).unwrap_or(0.0),
        }
    });

    let tomo: Vec<&TomographyMetrics> = rows.iter().filter_map(|r| r.tomography.as_ref()).collect();
    let tomography = (!tomo.is_empty()).then(|| {
        let tol = tolerance.unwrap_or(0.05);
        let per = |f: &dyn Fn(&TomographyMetrics, usize) -> f64| -> [f64; 3] {
            std::array::from_fn(|k| mean(tomo.iter().map(|t| f(t, k))).unwrap_or(0.0))
        };
        let avg = per(&|t, k| t.mean[k]);
        let spread = std::array::from_fn(|k| {
            if tomo.len() < 2 {
                return 0.0;
            }
            let ss: f64 = tomo.iter().map(|t| (t.mean[k] - avg[k]).powi(2)).sum();
            (ss / (tomo.len() - 1) as f64).sqrt()
        });
        TomographyAggregate {
            bias: per(&|t, k| t.error[k]),
            spread,
            mean_std_error: per(&|t, k| t.std_error[k]),
            within_tolerance: std::array::from_fn(|k| fraction(&tomo, |t| t.error[k].abs() <= tol)),
            within_3se: std::array::from_fn(|k| fraction(&tomo, |t| t.error[k].abs() <= 3.0 * t.std_error[k])),
        }
    });

    let walks: Vec<&WalkResiduals> = rows.iter().filter_map(|r| r.walk.as_ref()).collect();
    let walk = (!walks.is_empty()).then(|| {
        walks.iter().fold(WalkResiduals::default(), |acc, w| WalkResiduals {
            arc: acc.arc.max(w.arc),
            turn: acc.turn.max(w.turn),
            norm: acc.norm.max(w.norm),
        })
    });

    Aggregate {
        seeds: rows.len(),
        session,
        tomography,
        walk,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Delimited,
    Structured,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "delimited" => Ok(ReportFormat::Delimited),
            "structured" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown format `{other}` (table, delimited, structured)")),
        }
    }
}

type Cell<T> = fn(&T) -> Option<String>;

/// A per-seed column and the aggregate value shown under it, if any.
struct Column {
    name: &'static str,
    row: Cell<SeedRow>,
    total: Cell<Aggregate>,
}

fn num<T: ToString>(v: T) -> Option<String> {
    Some(v.to_string())
}

macro_rules! col {
    ($name:expr, |$r:ident| $row:expr, |$a:ident| $total:expr) => {
        Column {
            name: $name,
            row: |$r: &SeedRow| $row,
            total: |$a: &Aggregate| $total,
        }
    };
}

fn columns(scenario: Scenario) -> Vec<Column> {
    let mut cols = vec![col!("seed", |r| num(r.seed), |_a| Some("aggregate".into()))];
    match scenario {
        Scenario::CleanSession | Scenario::AttackSession => cols.extend([
            col!("bit_error_rate", |r| r.session.as_ref().and_then(|s| num(s.bit_error_rate)), |a| a
                .session
                .as_ref()
                .and_then(|s| num(s.mean_bit_error_rate))),
            col!("aborted", |r| r.session.as_ref().and_then(|s| num(s.aborted as u8)), |a| a
                .session
                .as_ref()
                .and_then(|s| num(s.abort_fraction))),
            col!("packages_to_abort", |r| r.session.as_ref().and_then(|s| s.packages_to_abort).and_then(num), |a| a
                .session
                .as_ref()
                .and_then(|s| s.mean_packages_to_abort)
                .and_then(num)),
            col!("feedback_evaluations", |r| r.session.as_ref().and_then(|s| num(s.feedback_evaluations)), |a| a
                .session
                .as_ref()
                .and_then(|s| num(s.mean_feedback_evaluations))),
            col!("basis_changes", |r| r.session.as_ref().and_then(|s| num(s.basis_changes)), |a| a
                .session
                .as_ref()
                .and_then(|s| num(s.mean_basis_changes))),
            col!("eve_accuracy", |r| r.session.as_ref().and_then(|s| s.eve_accuracy).and_then(num), |a| a
                .session
                .as_ref()
                .and_then(|s| s.mean_eve_accuracy)
                .and_then(num)),
            col!("eve_walk_streak", |r| r.session.as_ref().and_then(|s| s.eve_walk_streak).and_then(num), |_a| None),
            col!("latency_flags", |r| r.session.as_ref().and_then(|s| num(s.latency_flags)), |a| a
                .session
                .as_ref()
                .and_then(|s| num(s.mean_latency_flags))),
        ]),
        Scenario::Tomography => cols.extend([
            col!("mean_x", |r| r.tomography.as_ref().and_then(|t| num(t.mean[0])), |_a| None),
            col!("mean_y", |r| r.tomography.as_ref().and_then(|t| num(t.mean[1])), |_a| None),
            col!("mean_z", |r| r.tomography.as_ref().and_then(|t| num(t.mean[2])), |_a| None),
            col!("error_x", |r| r.tomography.as_ref().and_then(|t| num(t.error[0])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.bias[0]))),
            col!("error_y", |r| r.tomography.as_ref().and_then(|t| num(t.error[1])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.bias[1]))),
            col!("error_z", |r| r.tomography.as_ref().and_then(|t| num(t.error[2])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.bias[2]))),
            col!("std_error_x", |r| r.tomography.as_ref().and_then(|t| num(t.std_error[0])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.mean_std_error[0]))),
            col!("std_error_y", |r| r.tomography.as_ref().and_then(|t| num(t.std_error[1])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.mean_std_error[1]))),
            col!("std_error_z", |r| r.tomography.as_ref().and_then(|t| num(t.std_error[2])), |a| a
                .tomography
                .as_ref()
                .and_then(|t| num(t.mean_std_error[2]))),
        ]),
        Scenario::WalkGeometry => cols.extend([
            col!("arc_residual", |r| r.walk.and_then(|w| num(w.arc)), |a| a.walk.and_then(|w| num(w.arc))),
            col!("turn_residual", |r| r.walk.and_then(|w| num(w.turn)), |a| a.walk.and_then(|w| num(w.turn))),
            col!("norm_residual", |r| r.walk.and_then(|w| num(w.norm)), |a| a.walk.and_then(|w| num(w.norm))),
        ]),
    }
    cols
}

/// Writes per-seed rows plus the aggregate in the chosen format.
pub fn emit_report<W: Write>(report: &SimReport, format: ReportFormat, mut w: W) -> Result<(), HarnessError> {
    match format {
        ReportFormat::Structured => {
            serde_json::to_writer_pretty(&mut w, report).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        ReportFormat::Delimited => {
            let cols = columns(report.scenario);
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(cols.iter().map(|c| c.name)).map_err(csv_io)?;
            for row in &report.rows {
                csv.write_record(cols.iter().map(|c| (c.row)(row).unwrap_or_default()))
                    .map_err(csv_io)?;
            }
            csv.write_record(cols.iter().map(|c| (c.total)(&report.aggregate).unwrap_or_default()))
                .map_err(csv_io)?;
            csv.flush()?;
        }
        ReportFormat::Table => write_table(report, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

fn write_table<W: Write>(report: &SimReport, w: &mut W) -> std::io::Result<()> {
    let cols = columns(report.scenario);
    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| cols.iter().map(|c| (c.row)(r).map(compact).unwrap_or_else(|| "-".into())).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].len()).chain([c.name.len()]).max().unwrap_or(0))
        .collect();
    writeln!(w, "# {} ({} seeds)", report.name, report.rows.len())?;
    let line = |items: Vec<&str>| -> String {
        items
            .iter()
            .zip(&widths)
            .map(|(s, n)| format!("{s:>n$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(w, "{}", line(cols.iter().map(|c| c.name).collect()))?;
    for r in &cells {
        writeln!(w, "{}", line(r.iter().map(String::as_str).collect()))?;
    }
    writeln!(w)?;
    writeln!(w, "aggregate")?;
    let value = serde_json::to_value(&report.aggregate).map_err(std::io::Error::from)?;
    write_block(w, "", &value)?;
    if let Some(ms) = report.duration_ms {
        writeln!(w, "  duration_ms = {ms}")?;
    }
    Ok(())
}

/// Very small magnitudes read better in exponent form.
fn compact(cell: String) -> String {
    match cell.parse::<f64>() {
        Ok(v) if v != 0.0 && v.abs() < 1e-4 => format!("{v:e}"),
        _ => cell,
    }
}

fn write_block<W: Write>(w: &mut W, prefix: &str, v: &serde_json::Value) -> std::io::Result<()> {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                write_block(w, &key, v)?;
            }
            Ok(())
        }
        other => writeln!(w, "  {prefix} = {other}"),
    }
}

/// Emits to a file, creating or truncating it.
pub fn write_report_file(report: &SimReport, format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path)?;
    emit_report(report, format, BufWriter::new(file))
}
