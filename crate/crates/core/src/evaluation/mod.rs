//! Metrics, spliced inference, baselines and diagnostics.

mod alignment;
mod fewshot;
mod metrics;

use std::path::Path;

pub use alignment::{feature_alignment_stats, AlignmentStats, Histogram, HISTOGRAM_BINS};
pub use fewshot::{fewshot_indices, fewshot_run, supervision_equivalence, Equivalence, FewShotResult, DEFAULT_REPEATS};
pub use metrics::{dc, mse, MetricsReport, ModelIdentity, Provenance};

use crate::error::{Error, Result};
use crate::hydrodata::{Normalizer, WindowedSample};
use crate::models::Variant;
use crate::training::Forecaster;

/// Predictions and truths in original units with their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predictions: Vec<f64>,
    pub truths: Vec<f64>,
    pub report: MetricsReport,
}

impl Prediction {
    /// Two columns, `truth,prediction`, one row per sample.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(["truth", "prediction"])
            .map_err(|e| Error::io(path, e.into()))?;
        for (y, p) in self.truths.iter().zip(&self.predictions) {
            w.write_record([y.to_string(), p.to_string()])
                .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a `truth,prediction` file written by [`Prediction::write_trace`].
pub fn read_prediction_trace(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let (mut truths, mut predictions) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let parse_error = |reason: String| Error::Parse {
            location: format!("{} line {line}", path.display()),
            reason,
        };
        let record = record.map_err(|e| parse_error(e.to_string()))?;
        if record.len() != 2 {
            return Err(parse_error(format!("expected 2 fields, found {}", record.len())));
        }
        let value = |k: usize| {
            record[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_error(format!("`{}` is not a number", &record[k])))
        };
        truths.push(value(0)?);
        predictions.push(value(1)?);
    }
    if truths.is_empty() {
        return Err(Error::Parse {
            location: format!("{} line 1", path.display()),
            reason: "trace has no samples".into(),
        });
    }
    Ok((truths, predictions))
}

fn truths(samples: &[WindowedSample], normalizer: &Normalizer) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(normalizer.invert_runoff(s.label()?)))
        .collect()
}

/// Runs `model` in evaluation mode and scores it in original units. For the
/// adapted model pass the target encoder with the source head.
pub fn predict(
    model: &Forecaster,
    normalizer: &Normalizer,
    samples: &[WindowedSample],
    provenance: Provenance,
) -> Result<Prediction> {
    let Some(first) = samples.first() else {
        return Err(Error::Argument("nothing to predict".into()));
    };
    let stations = first.x.nrows();
    let expected = match model.variant {
        Variant::RainfallEncoder => stations,
        Variant::JointEncoder => stations + 1,
    };
    if normalizer.station_count() != stations || model.encoder.input_channels() != expected {
        return Err(Error::Config(format!(
            "normalizer has {} stations, encoder takes {} channels, data has {stations} stations",
            normalizer.station_count(),
            model.encoder.input_channels()
        )));
    }
    let truths = truths(samples, normalizer)?;
    let predictions = normalizer.invert_runoff_all(&model.predict(samples));
    let report = MetricsReport::compute(&predictions, &truths, provenance)?;
    Ok(Prediction {
        predictions,
        truths,
        report,
    })
}

/// Persistence forecast: the last observed runoff of each window.
pub fn lower_bound_baseline(
    samples: &[WindowedSample],
    normalizer: &Normalizer,
    provenance: Provenance,
) -> Result<Prediction> {
    let truths = truths(samples, normalizer)?;
    let predictions: Vec<f64> = samples
        .iter()
        .map(|s| normalizer.invert_runoff(s.last_runoff()))
        .collect();
    let report = MetricsReport::compute(&predictions, &truths, provenance)?;
    Ok(Prediction {
        predictions,
        truths,
        report,
    })
}
