//! On-disk record format: one JSON object per line, UTF-8.
//!
//! Floats serialize at shortest round-trip precision and target/time maps are
//! ordered, so identical inputs always produce identical bytes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NapError, Result};

/// Target names a record may carry.
pub const TARGET_NAMES: [&str; 14] = [
    "confidence",
    "entropy",
    "mi",
    "aleatoric",
    "similarity",
    "wer",
    "errors",
    "ref_len",
    "similarity_small",
    "similarity_large",
    "wer_small",
    "wer_large",
    "errors_small",
    "errors_large",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "validation" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            _ => Err(NapError::UnknownName {
                kind: "split",
                name: s.to_string(),
                valid: "train, validation, test".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Times {
    pub small: f64,
    pub large: f64,
    pub proxy: f64,
}

/// One example: frozen encoder features plus teacher-produced scalar targets
/// and per-model time measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub split: Split,
    pub domain: String,
    /// `L x d`, row-major; all positions valid (padding is never stored).
    pub features: Vec<Vec<f64>>,
    pub targets: BTreeMap<String, f64>,
    pub times: Times,
}

impl ScoreRecord {
    pub fn target(&self, field: &str) -> Result<f64> {
        self.targets
            .get(field)
            .copied()
            .ok_or_else(|| NapError::MissingTarget(field.to_string(), self.id.clone()))
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |row| row.len())
    }
}

pub fn write_jsonl(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    if records.is_empty() {
        return Err(NapError::EmptyInput("record file"));
    }
    Ok(records)
}
