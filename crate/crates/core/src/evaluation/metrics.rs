use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Variant;

fn check_lengths(predictions: &[f64], truths: &[f64]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::Argument(format!(
            "{} predictions against {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("metrics need at least one sample".into()));
    }
    Ok(())
}

pub fn mse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let sse: f64 = predictions.iter().zip(truths).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / predictions.len() as f64)
}

/// Deterministic coefficient `1 − Σ(ŷ−y)² / Σ(y−ȳ)²`.
pub fn dc(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    if truths.len() < 2 {
        return Err(Error::Argument("DC needs at least two samples".into()));
    }
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let spread: f64 = truths.iter().map(|y| (y - mean) * (y - mean)).sum();
    if spread == 0.0 {
        return Err(Error::UndefinedDenominator("all truths are identical".into()));
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(1.0 - sse / spread)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIdentity {
    pub stage: String,
    pub variant: Variant,
    /// Labeled target windows used in training; zero for unsupervised models.
    pub supervision_hours: usize,
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: ModelIdentity,
    pub dataset: String,
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub dc: f64,
    pub dc_percent: f64,
    pub n: usize,
    pub model: ModelIdentity,
    pub dataset: String,
    pub seed: u64,
    pub config_digest: String,
}

impl MetricsReport {
    /// Scores predictions against truths, both in original units.
    pub fn compute(predictions: &[f64], truths: &[f64], provenance: Provenance) -> Result<Self> {
        let mse = mse(predictions, truths)?;
        let dc = dc(predictions, truths)?;
        Ok(Self {
            mse,
            dc,
            dc_percent: dc * 100.0,
            n: truths.len(),
            model: provenance.model,
            dataset: provenance.dataset,
            seed: provenance.seed,
            config_digest: provenance.config_digest,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
