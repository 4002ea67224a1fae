//! Artifact formats. Every file is written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use sddp_reg_core::portfolio::ReturnScenarios;
use sddp_reg_core::{CutPool, IterationRecord};

use crate::error::CliError;

pub const BOUNDS_HEADER: &str =
    "iteration,lower_bound,upper_bound,gap_pct,forward_ms,backward_ms,cum_ms";

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.into(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })?;
    text.push(b'\n');
    atomic_write(path, &text)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn bounds_csv(records: &[IterationRecord]) -> Vec<u8> {
    let header: Vec<String> = BOUNDS_HEADER.split(',').map(String::from).collect();
    let mut cum = 0.0;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            cum += r.forward_ms + r.backward_ms;
            vec![
                r.iteration.to_string(),
                opt(r.lower_bound),
                opt(r.upper_bound),
                opt(r.gap_pct()),
                r.forward_ms.to_string(),
                r.backward_ms.to_string(),
                cum.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// `iteration,intercept,slope_1..slope_n,trial_1..trial_n`, intercepts and
/// slopes in internal (minimization, normalized) units.
pub fn cuts_csv(pool: &CutPool) -> Vec<u8> {
    let n = pool.dim;
    let mut header = vec!["iteration".to_string(), "intercept".to_string()];
    header.extend((1..=n).map(|i| format!("slope_{i}")));
    header.extend((1..=n).map(|i| format!("trial_{i}")));
    let rows: Vec<Vec<String>> = pool
        .cuts()
        .iter()
        .map(|c| {
            let mut row = vec![c.iteration.to_string(), c.intercept.to_string()];
            row.extend(c.slope.iter().map(f64::to_string));
            row.extend(c.trial.iter().map(f64::to_string));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Writes `cuts/stage_<t>.csv` for every pool; pool `i` approximates the
/// cost-to-go of stage `i + 2`.
pub fn write_cuts(dir: &Path, pools: &[CutPool]) -> Result<(), CliError> {
    for pool in pools {
        atomic_write(
            &dir.join(format!("stage_{}.csv", pool.stage)),
            &cuts_csv(pool),
        )?;
    }
    Ok(())
}

/// Gross returns from a `date,asset_1..asset_n` CSV, one row per period.
pub fn load_returns_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let malformed = |message: String| CliError::MalformedCsv {
        path: path.into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| malformed(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    let n = header.len().saturating_sub(1);
    let expected = (1..=n).map(|i| format!("asset_{i}"));
    if n == 0 || &header[0] != "date" || !header.iter().skip(1).eq(expected) {
        return Err(malformed(format!(
            "header must be date,asset_1..asset_n, got {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(n);
        for field in record.iter().skip(1) {
            let value: f64 = field
                .parse()
                .map_err(|_| malformed(format!("line {line}: `{field}` is not a number")))?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::NonPositiveReturn {
                    path: path.into(),
                    line,
                    value,
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(malformed("no data rows".into()));
    }
    Ok(rows)
}

/// Risky returns of stages `2..T+1` as history rows, labelled `s<t>m<j>`.
pub fn returns_csv(scenarios: &ReturnScenarios) -> Vec<u8> {
    let n = scenarios.stages[0][0].len();
    let mut header = vec!["date".to_string()];
    header.extend((1..=n).map(|i| format!("asset_{i}")));
    let mut rows = Vec::new();
    for (t, stage) in scenarios.stages.iter().enumerate().skip(1) {
        for (j, ret) in stage.iter().enumerate() {
            let mut row = vec![format!("s{}m{}", t + 1, j + 1)];
            row.extend(ret.iter().map(f64::to_string));
            rows.push(row);
        }
    }
    csv_bytes(&header, &rows)
}
