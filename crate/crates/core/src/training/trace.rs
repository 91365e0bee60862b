use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Supervised batch-mean squared error (stage 1).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generator_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub critic_loss: Option<f64>,
    /// Learning rate at the epoch's last step.
    pub lr: f64,
    /// mean(Y / Ŷ) on the labeled probe set, original units.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_ratio: Option<f64>,
    #[serde(default)]
    pub diverged: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                location: format!("{} line {}", path.display(), i + 1),
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(Error::Parse {
                location: format!("{} line 1", path.display()),
                reason: "trace is empty".into(),
            });
        }
        Ok(Self { records })
    }

    /// Same records with wall-clock times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.wall_seconds = 0.0;
        }
        out
    }
}
