//! Reading and writing the per-run CSV and JSON artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use timo_core::integrator::{Sample, CSV_HEADER};

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    timo_core::integrator::write_csv(samples, BufWriter::new(f)).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses a series written by `write_samples`. Errors carry the 1-based
/// line number of the offending row.
pub fn read_samples(path: &Path) -> CliResult<Vec<Sample>> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(1, format!("expected header {CSV_HEADER:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = [0.0f64; 10];
        for (i, field) in rec.iter().enumerate() {
            values[i] = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column {} is not a number: {field:?}", expected[i])))?;
        }
        if !(values[0].is_finite() && values[1].is_finite()) {
            return Err(parse_err(line, "t and E must be finite".into()));
        }
        out.push(Sample::from_values(values));
    }
    Ok(out)
}

pub fn artifact(dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{prefix}{suffix}"))
}
