//! CSV and JSON emission. Floats carry 9 significant digits.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::sweep::{SweepRow, TrialOutcome, TrialRecord};
use super::ExperimentError;

pub const CSV_COLUMNS: [&str; 12] = [
    "mode",
    "L",
    "log_L",
    "delta",
    "trials",
    "mean_tau",
    "stderr_tau",
    "error_rate",
    "cap_hits",
    "d_star",
    "d_star_delta",
    "inv_d_star",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(ExperimentError::Validation(format!(
                "unknown format {other:?}"
            ))),
        }
    }
}

/// `x` rounded to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest decimal rendering of `round_sig9(x)`.
pub fn sig9(x: f64) -> String {
    format!("{}", round_sig9(x))
}

fn rounded(row: &SweepRow) -> SweepRow {
    SweepRow {
        l: round_sig9(row.l),
        log_l: round_sig9(row.log_l),
        delta: round_sig9(row.delta),
        mean_tau: round_sig9(row.mean_tau),
        stderr_tau: round_sig9(row.stderr_tau),
        error_rate: round_sig9(row.error_rate),
        d_star: round_sig9(row.d_star),
        d_star_delta: round_sig9(row.d_star_delta),
        inv_d_star: round_sig9(row.inv_d_star),
        ..row.clone()
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.mode.name().to_string(),
            sig9(r.l),
            sig9(r.log_l),
            sig9(r.delta),
            r.trials.to_string(),
            sig9(r.mean_tau),
            sig9(r.stderr_tau),
            sig9(r.error_rate),
            r.cap_hits.to_string(),
            sig9(r.d_star),
            sig9(r.d_star_delta),
            sig9(r.inv_d_star),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Array of objects keyed by the CSV column names. Non-finite values become `null`.
pub fn write_json<W: Write>(rows: &[SweepRow], mut out: W) -> Result<(), ExperimentError> {
    let rounded: Vec<SweepRow> = rows.iter().map(rounded).collect();
    serde_json::to_writer_pretty(&mut out, &rounded)?;
    writeln!(out)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(ExperimentError::Validation(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    Ok(r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
}

pub fn render(rows: &[SweepRow], format: Format) -> Result<Vec<u8>, ExperimentError> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(rows, &mut buf)?,
        Format::Json => write_json(rows, &mut buf)?,
    }
    Ok(buf)
}

/// Writes `rows` to `path`, or to standard output when `path` is `None`.
pub fn emit_results(
    rows: &[SweepRow],
    format: Format,
    path: Option<&Path>,
) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Validation("no rows to emit".into()));
    }
    let bytes = render(rows, format)?;
    match path {
        Some(p) => BufWriter::new(File::create(p)?).write_all(&bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

pub const RECORD_COLUMNS: [&str; 10] = [
    "point", "mode", "L", "delta", "trial", "seed", "outcome", "steps", "declared", "correct",
];

/// Per-trial sidecar: one line per trial in canonical order. `steps` is the
/// stopping time, or the pull count at the cap for capped trials.
pub fn write_records_csv<W: Write>(
    records: &[TrialRecord],
    points: &[super::config::SweepPoint],
    out: W,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let (outcome, steps, declared, correct) = match r.outcome {
            TrialOutcome::Stopped {
                stopping_time,
                declared,
                correct,
            } => (
                "stopped",
                stopping_time,
                declared.to_string(),
                correct.to_string(),
            ),
            TrialOutcome::CapHit { steps } => ("cap", steps, String::new(), String::new()),
        };
        let p = &points[r.point];
        w.write_record([
            r.point.to_string(),
            r.mode.name().to_string(),
            sig9(p.threshold_l),
            sig9(p.delta),
            r.trial.to_string(),
            r.seed.to_string(),
            outcome.to_string(),
            steps.to_string(),
            declared,
            correct,
        ])?;
    }
    w.flush()?;
    Ok(())
}
