//! Artifact readers and writers.
//!
//! Writers produce bytes or strings; [`crate::fsio::write_atomic`] puts them
//! on disk. Readers take the path for error messages.

mod binary;
mod tables;

use std::path::Path;

pub use binary::*;
pub use tables::*;

use crate::error::FormatError;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String, FormatError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| FormatError::invalid(path, format!("not UTF-8: {e}")))
}

/// Parse a `key=value\tkey=value` header, requiring exactly `keys` in order.
fn parse_header<'a>(path: &Path, line: Option<&'a str>, keys: &[&str]) -> Result<Vec<&'a str>, FormatError> {
    let line = line.ok_or_else(|| FormatError::invalid(path, "missing header line"))?;
    let fields: Vec<&str> = line.split('\t').collect();
    let expected = keys.iter().map(|k| format!("{k}=<value>")).collect::<Vec<_>>().join("\\t");
    if fields.len() != keys.len() {
        return Err(FormatError::line(path, 1, format!("header must be `{expected}`")));
    }
    keys.iter()
        .zip(fields)
        .map(|(key, field)| match field.split_once('=') {
            Some((k, v)) if k == *key => Ok(v),
            _ => Err(FormatError::line(path, 1, format!("header must be `{expected}`"))),
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, raw: &str) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| FormatError::line(path, line, format!("bad {what} `{raw}`: {e}")))
}

fn parse_finite(path: &Path, line: usize, what: &str, raw: &str) -> Result<f64, FormatError> {
    let x: f64 = parse_field(path, line, what, raw)?;
    if !x.is_finite() {
        return Err(FormatError::line(path, line, format!("{what} is not finite")));
    }
    Ok(x)
}

/// Split a data row into exactly `n` tab-separated fields.
fn split_row<'a>(path: &Path, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>, FormatError> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != n {
        return Err(FormatError::line(
            path,
            line,
            format!("expected {n} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}
