//! Output records and their provenance fields.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use parashape::sampler::{Method, Statistic};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of the settings' JSON form.
pub fn config_hash<T: Serialize>(settings: &T) -> String {
    let bytes = serde_json::to_vec(settings).expect("settings serialise");
    Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub t: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub method: Method,
    pub seed: u64,
    pub statistic: Statistic,
    pub upper_bound: Option<f64>,
    pub extinct_stage: Option<usize>,
    pub truncated: usize,
    pub approximate_se: bool,
    pub dim: usize,
    pub alpha: f64,
    pub a_coef: f64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub statistic: Statistic,
    pub dim: usize,
    pub alpha: f64,
    pub a_coef: f64,
    pub exponent_q: f64,
    pub rate_hat: f64,
    pub intercept_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_points: usize,
    pub residual_rms: f64,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeFitRecord {
    pub dim: usize,
    pub slope: f64,
    pub slope_theory: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_points: usize,
    pub config_hash: String,
    pub version: String,
}

/// Serialises records as JSON lines.
pub fn jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

/// Serialises rows as CSV with a header taken from the field names.
pub fn csv_table<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in rows {
        writer
            .serialize(r)
            .map_err(|e| CliError::config(format!("cannot write CSV: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::config(format!("cannot write CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Reads JSON lines, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::config(format!("{}:{}: malformed record: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Writes the whole output in one go to `path` or stdout.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p.display().to_string(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("stdout", e))
        }
    }
}
