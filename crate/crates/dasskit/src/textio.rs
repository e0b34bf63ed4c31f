//! Helpers for the line-oriented text artifact formats.
//!
//! Every float is written with [`fmt_f64`], which emits 17 significant
//! digits. That is enough to reproduce any `f64` bit-exactly on parse, and
//! the formatting itself is canonical, so save -> load -> save produces
//! byte-identical files.

use std::path::Path;

use crate::error::{Error, Result};

/// Canonical decimal rendering of an `f64` (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Canonical rendering of a float slice, space-separated.
pub fn fmt_f64_slice(vs: &[f64]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| fmt_f64(*v)).collect();
    parts.join(" ")
}

/// Canonical rendering of a float slice, comma-separated (for header fields).
pub fn fmt_f64_csv(vs: &[f64]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| fmt_f64(*v)).collect();
    parts.join(",")
}

pub fn parse_f64(path: &Path, line: usize, field: &str, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("field {field:?}: bad float {token:?}")))
}

pub fn parse_usize(path: &Path, line: usize, field: &str, token: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("field {field:?}: bad integer {token:?}")))
}

pub fn parse_u64(path: &Path, line: usize, field: &str, token: &str) -> Result<u64> {
    token
        .parse::<u64>()
        .map_err(|_| Error::parse(path, line, format!("field {field:?}: bad integer {token:?}")))
}

pub fn parse_f64_list(path: &Path, line: usize, field: &str, value: &str, sep: char) -> Result<Vec<f64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(sep)
        .map(|t| parse_f64(path, line, field, t))
        .collect()
}

/// Hex rendering of a byte digest.
pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
