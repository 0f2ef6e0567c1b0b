//! File formats: connectivity matrices, complexes, CSV helpers.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::complex::{ComplexFile, SimplicialComplex};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Deserialize)]
struct ConnectivityJson {
    n: usize,
    matrix: Vec<Vec<f64>>,
}

/// Parses `n` rows of `n` comma-separated reals. Blank lines are skipped;
/// a first line that does not parse as numbers is treated as a header.
pub fn parse_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() && lineno == 0 => continue,
            Err(e) => {
                return Err(Error::InputFormat(format!("line {}: {e}", lineno + 1)));
            }
        }
    }
    Ok(rows)
}

pub fn parse_matrix_json(text: &str) -> Result<Vec<Vec<f64>>> {
    let parsed: ConnectivityJson =
        serde_json::from_str(text).map_err(|e| Error::InputFormat(e.to_string()))?;
    if parsed.matrix.len() != parsed.n {
        return Err(Error::InputFormat(format!(
            "declared n = {} but matrix has {} rows",
            parsed.n,
            parsed.matrix.len()
        )));
    }
    Ok(parsed.matrix)
}

pub fn read_connectivity(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_matrix_json(&text),
        _ => parse_matrix_csv(&text),
    }
}

pub fn read_complex_json(path: &Path) -> Result<SimplicialComplex> {
    let text = fs::read_to_string(path)?;
    let file: ComplexFile =
        serde_json::from_str(&text).map_err(|e| Error::InputFormat(e.to_string()))?;
    SimplicialComplex::from_file(&file)
}

pub fn write_complex_json(path: &Path, complex: &SimplicialComplex) -> Result<()> {
    write_json(path, &complex.to_file())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads either a complex (`{"n_nodes", "edges", ...}`) or a connectivity
/// matrix (CSV, or JSON with `"matrix"`) thresholded at `threshold`.
pub fn load_complex_or_matrix(path: &Path, threshold: f64) -> Result<SimplicialComplex> {
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    if is_json {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::InputFormat(e.to_string()))?;
        if value.get("matrix").is_some() {
            let m = parse_matrix_json(&text)?;
            return SimplicialComplex::from_connectivity(&m, threshold);
        }
        let file: ComplexFile =
            serde_json::from_value(value).map_err(|e| Error::InputFormat(e.to_string()))?;
        return SimplicialComplex::from_file(&file);
    }
    let m = read_connectivity(path)?;
    SimplicialComplex::from_connectivity(&m, threshold)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Shortest round-trip decimal form; reading it back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
