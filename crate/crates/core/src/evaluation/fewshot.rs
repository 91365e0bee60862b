use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{predict, Provenance};
use crate::error::{Error, Result};
use crate::hydrodata::{Normalizer, WindowedSample};
use crate::models::ArchConfig;
use crate::training::{pretrain, TrainConfig};

const FEWSHOT_STREAM_BASE: u64 = 1 << 40;

pub const DEFAULT_REPEATS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    pub hours: usize,
    pub mse: Vec<f64>,
    pub dc: Vec<f64>,
    pub mean_mse: f64,
    pub mean_dc: f64,
}

impl FewShotResult {
    pub fn from_repeats(hours: usize, mse: Vec<f64>, dc: Vec<f64>) -> Self {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            hours,
            mean_mse: mean(&mse),
            mean_dc: mean(&dc),
            mse,
            dc,
        }
    }
}

/// Training indices for one repeat, in ascending order.
pub fn fewshot_indices(available: usize, hours: usize, seed: u64, repeat: usize, contiguous: bool) -> Vec<usize> {
    let mut rng = crate::training::stream_rng(seed, FEWSHOT_STREAM_BASE + repeat as u64);
    if contiguous {
        let start = rng.random_range(0..=available - hours);
        return (start..start + hours).collect();
    }
    let mut idx = sample(&mut rng, available, hours).into_vec();
    idx.sort_unstable();
    idx
}

/// Trains a supervised model from scratch on `hours` labeled target windows,
/// `repeats` times, scoring each on the fixed test split. Repeat `r` draws
/// its windows from its own stream and trains with seed `cfg.seed + r`.
#[allow(clippy::too_many_arguments)]
pub fn fewshot_run(
    target_train: &[WindowedSample],
    target_test: &[WindowedSample],
    hours: usize,
    repeats: usize,
    contiguous: bool,
    cfg: &TrainConfig,
    arch: &ArchConfig,
    normalizer: &Normalizer,
    provenance: &Provenance,
) -> Result<FewShotResult> {
    if hours == 0 || hours > target_train.len() {
        return Err(Error::Size(format!(
            "{hours} hours requested but the training split has {} windows",
            target_train.len()
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("few-shot needs at least one repeat".into()));
    }
    let mut mse = Vec::with_capacity(repeats);
    let mut dc = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let subset: Vec<WindowedSample> = fewshot_indices(target_train.len(), hours, cfg.seed, r, contiguous)
            .into_iter()
            .map(|i| target_train[i].clone())
            .collect();
        let run_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            ..cfg.clone()
        };
        let (model, _) = pretrain(&subset, &run_cfg, arch)?;
        let mut prov = provenance.clone();
        prov.model.supervision_hours = hours;
        prov.seed = run_cfg.seed;
        let report = predict(&model, normalizer, target_test, prov)?.report;
        log::debug!("few-shot {hours} h repeat {r}: DC {:.4}", report.dc);
        mse.push(report.mse);
        dc.push(report.dc);
    }
    Ok(FewShotResult::from_repeats(hours, mse, dc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Equivalence {
    /// Adjacent sweep points whose mean DCs bracket the target DC, and the
    /// linearly interpolated crossing.
    Interval {
        low: usize,
        high: usize,
        hours: f64,
    },
    BelowRange,
    AboveRange,
}

/// Locates an unsupervised DC on the few-shot DC-versus-hours curve.
pub fn supervision_equivalence(dc: f64, sweep: &[FewShotResult]) -> Equivalence {
    let mut points: Vec<(usize, f64)> = sweep.iter().map(|r| (r.hours, r.mean_dc)).collect();
    points.sort_by_key(|p| p.0);
    if let Some(&(h, _)) = points.iter().find(|p| p.1 == dc) {
        return Equivalence::Interval {
            low: h,
            high: h,
            hours: h as f64,
        };
    }
    for pair in points.windows(2) {
        let ((h0, d0), (h1, d1)) = (pair[0], pair[1]);
        if (d0 < dc && dc < d1) || (d1 < dc && dc < d0) {
            let frac = (dc - d0) / (d1 - d0);
            return Equivalence::Interval {
                low: h0,
                high: h1,
                hours: h0 as f64 + frac * (h1 - h0) as f64,
            };
        }
    }
    let below = points.iter().all(|p| dc < p.1);
    if below {
        Equivalence::BelowRange
    } else {
        Equivalence::AboveRange
    }
}
