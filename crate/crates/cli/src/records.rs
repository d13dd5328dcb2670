//! Line-delimited JSON records exchanged between commands.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Ground truth for one query, written by `gen` and `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub query: usize,
    pub neighbor: usize,
    /// Distance from the query to `neighbor` in the mode's own metric.
    #[serde(alias = "distance")]
    pub clean_distance: f64,
    /// Planted corrupted coordinates, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrupted: Vec<usize>,
}

/// One answered query, written by `query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub mode: String,
    pub index: Option<usize>,
    pub distance: Option<f64>,
    pub wall_us: f64,
    #[serde(default)]
    pub stats: serde_json::Value,
}

/// Aggregate written by `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub mode: String,
    pub queries: usize,
    pub answered: usize,
    /// Fraction of queries answered with the ground-truth neighbor.
    pub recall: f64,
    /// Fraction of answers passing the mode's lightness test; needs the index.
    pub light_fraction: Option<f64>,
    /// Mean answer distance over ground-truth distance.
    pub mean_ratio: Option<f64>,
    pub wall_us_mean: f64,
    pub wall_us_p50: f64,
    pub wall_us_p95: f64,
    pub wall_us_max: f64,
}

pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, records: &[T]) -> Result<(), CliError> {
    for rec in records {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
