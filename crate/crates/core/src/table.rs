//! Small helpers over the `csv` crate for headered input tables.

use std::fs::File;
use std::path::Path;

use csv::{Reader, ReaderBuilder, StringRecord};

use crate::error::{Error, Result};

/// Opens `path` and checks that its header is exactly `expected`.
pub fn open(path: &Path, expected: &[&str]) -> Result<Reader<File>> {
    let (reader, header) = open_any(path)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(reader)
}

/// Opens `path` and returns its header row.
pub fn open_any(path: &Path) -> Result<(Reader<File>, StringRecord)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    Ok((reader, header))
}

/// Data rows with their 1-based line numbers, checked for arity.
pub fn rows<'a>(
    path: &'a Path,
    reader: &'a mut Reader<File>,
    arity: usize,
) -> impl Iterator<Item = Result<(u64, StringRecord)>> + 'a {
    reader.records().map(move |rec| {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != arity {
            return Err(Error::parse(
                path,
                line,
                format!("expected {arity} fields, got {}", rec.len()),
            ));
        }
        Ok((line, rec))
    })
}

/// Parses a float cell, treating an empty cell as missing.
pub fn optional_f64(path: &Path, line: u64, cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::parse(path, line, format!("invalid number `{cell}`")))
}

pub fn required_f64(path: &Path, line: u64, cell: &str) -> Result<f64> {
    optional_f64(path, line, cell)?
        .ok_or_else(|| Error::parse(path, line, "missing required number"))
}
