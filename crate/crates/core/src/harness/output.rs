//! CSV output: a `#` block echoing the configuration, then one row per grid point.

use std::io;
use std::path::Path;

use super::{ConfigError, ExperimentConfig, Scenario, SweepResult, SweepRow};

pub const COLUMNS: [&str; 16] = [
    "scenario",
    "M",
    "K",
    "rho_db",
    "format",
    "mode",
    "block_size",
    "lambda",
    "mean_rate",
    "rate_stderr",
    "median_rel_err",
    "p99_rel_err",
    "bound_violation_rate",
    "breakdown_rate",
    "trials",
    "seed",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config header: {0}")]
    Config(#[from] ConfigError),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}, column `{column}`: {reason}")]
    Field {
        row: usize,
        column: &'static str,
        reason: String,
    },
}

fn f(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x:?}")
}

/// The full CSV text of a sweep.
pub fn emit_csv(result: &SweepResult) -> Result<String, CsvError> {
    let mut out = String::new();
    for line in result.config.to_text().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in &result.rows {
        w.write_record([
            r.scenario.to_string(),
            r.m.to_string(),
            r.k.to_string(),
            f(r.rho_db),
            r.format.clone(),
            r.mode.clone(),
            r.block_size.map_or(String::new(), |b| b.to_string()),
            f(r.lambda),
            f(r.mean_rate),
            f(r.rate_stderr),
            f(r.median_rel_err),
            f(r.p99_rel_err),
            f(r.bound_violation_rate),
            f(r.breakdown_rate),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    out.push_str(&String::from_utf8(body).expect("csv writes utf-8"));
    Ok(out)
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<(), CsvError> {
    std::fs::write(path, emit_csv(result)?)?;
    Ok(())
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    row: usize,
    idx: usize,
) -> Result<T, CsvError>
where
    T::Err: std::fmt::Display,
{
    rec[idx].parse().map_err(|e: T::Err| CsvError::Field {
        row,
        column: COLUMNS[idx],
        reason: e.to_string(),
    })
}

/// Inverse of [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<SweepResult, CsvError> {
    let header: String = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| format!("{}\n", l.trim()))
        .collect();
    let config = ExperimentConfig::parse(&header)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != COLUMNS {
        return Err(CsvError::Header {
            expected: COLUMNS.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(SweepRow {
            scenario: field::<Scenario>(&rec, i, 0)?,
            m: field(&rec, i, 1)?,
            k: field(&rec, i, 2)?,
            rho_db: field(&rec, i, 3)?,
            format: rec[4].to_string(),
            mode: rec[5].to_string(),
            block_size: if rec[6].is_empty() {
                None
            } else {
                Some(field(&rec, i, 6)?)
            },
            lambda: field(&rec, i, 7)?,
            mean_rate: field(&rec, i, 8)?,
            rate_stderr: field(&rec, i, 9)?,
            median_rel_err: field(&rec, i, 10)?,
            p99_rel_err: field(&rec, i, 11)?,
            bound_violation_rate: field(&rec, i, 12)?,
            breakdown_rate: field(&rec, i, 13)?,
            trials: field(&rec, i, 14)?,
            seed: field(&rec, i, 15)?,
        });
    }
    Ok(SweepResult { config, rows })
}

pub fn read_csv(path: &Path) -> Result<SweepResult, CsvError> {
    parse_csv(&std::fs::read_to_string(path)?)
}
