//! Small helpers for the delimited-text formats.

use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Iterator over non-empty, non-comment lines with 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a comma-separated row of floats, requiring exactly `expected` fields.
pub(crate) fn parse_row(path: &Path, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(parse_error(
            path,
            line_no,
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|e| parse_error(path, line_no, format!("`{f}`: {e}")))
        })
        .collect()
}

pub(crate) fn read_to_string(path: &Path) -> Result<(PathBuf, String)> {
    Ok((path.to_path_buf(), std::fs::read_to_string(path)?))
}
