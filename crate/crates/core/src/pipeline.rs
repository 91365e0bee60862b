//! Run configuration and the staged driver shared by the command line and
//! the end-to-end tests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{
    feature_alignment_stats, lower_bound_baseline, predict, AlignmentStats, ModelIdentity, Prediction, Provenance,
};
use crate::hydrodata::{
    make_windows, split_chronological, HydroSeries, Normalizer, SeriesSchema, SyntheticConfig, WindowConfig,
    WindowedSample,
};
use crate::models::{init_params, ArchConfig, EncoderParams, ModelBundle, Variant};
use crate::training::{
    adapt, encode_all, pretrain, AdaptConfig, Checkpoint, CheckpointMeta, Forecaster, Probe, Stage, TrainConfig,
    TrainTrace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Share of each series, from the start, used for training.
    pub train_fraction: f64,
    pub timestamp_column: String,
    pub runoff_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            timestamp_column: "timestamp".into(),
            runoff_column: "runoff".into(),
        }
    }
}

impl DataConfig {
    pub fn schema(&self) -> SeriesSchema {
        SeriesSchema {
            timestamp: self.timestamp_column.clone(),
            rainfall: Vec::new(),
            runoff: self.runoff_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPair {
    pub source: SyntheticConfig,
    pub target: SyntheticConfig,
}

impl Default for SyntheticPair {
    fn default() -> Self {
        Self {
            source: SyntheticConfig::source_default(),
            target: SyntheticConfig::target_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FewShotConfig {
    pub hours: Vec<usize>,
    pub repeats: usize,
    /// Draw one contiguous block of windows instead of a uniform sample.
    pub contiguous: bool,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            hours: vec![50, 100, 200, 400, 800],
            repeats: crate::evaluation::DEFAULT_REPEATS,
            contiguous: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synthetic: SyntheticPair,
    pub window: WindowConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub fewshot: FewShotConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            location: origin.into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.window.validate(self.arch.receptive_field())?;
        self.train.validate()?;
        self.adapt.validate()?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.data.train_fraction
            )));
        }
        if self.fewshot.repeats == 0 || self.fewshot.hours.contains(&0) {
            return Err(Error::Config("few-shot repeats and hours must be positive".into()));
        }
        Ok(())
    }

    /// Uses `seed` for every training stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.adapt.seed = seed;
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One watershed, normalized and windowed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub normalizer: Normalizer,
    pub train: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

impl Prepared {
    pub fn station_count(&self) -> usize {
        self.normalizer.station_count()
    }
}

/// Chronological split, scaling fitted on the training part, labeled
/// windows on both parts.
pub fn prepare(series: &HydroSeries, cfg: &RunConfig) -> Result<Prepared> {
    let (train, test) = split_chronological(series, cfg.data.train_fraction, cfg.window.min_split_segment())?;
    let normalizer = Normalizer::fit(&train)?;
    Ok(Prepared {
        name: series.name.clone(),
        train: make_windows(&normalizer.apply(&train)?, &cfg.window, true)?,
        test: make_windows(&normalizer.apply(&test)?, &cfg.window, true)?,
        normalizer,
    })
}

/// Copies of `samples` with every runoff value removed, for the unlabeled
/// side of adaptation.
pub fn strip_labels(samples: &[WindowedSample]) -> Vec<WindowedSample> {
    samples
        .iter()
        .map(|s| WindowedSample {
            x: s.x.clone(),
            y_history: vec![f64::NAN; s.y_history.len()],
            y: None,
            source_index: s.source_index,
        })
        .collect()
}

pub fn provenance(
    cfg: &RunConfig,
    stage: &str,
    variant: Variant,
    hours: usize,
    dataset: &str,
    seed: u64,
) -> Provenance {
    Provenance {
        model: ModelIdentity {
            stage: stage.into(),
            variant,
            supervision_hours: hours,
        },
        dataset: dataset.into(),
        seed,
        config_digest: cfg.digest(),
    }
}

pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: TrainTrace,
    pub test: Prediction,
    pub baseline: Prediction,
}

/// Stage 1 on one watershed: supervised training and test-split scoring.
pub fn run_pretrain(data: &Prepared, cfg: &RunConfig) -> Result<PretrainOutcome> {
    let (model, trace) = pretrain(&data.train, &cfg.train, &cfg.arch)?;
    let hours = data.train.len();
    let test = predict(
        &model,
        &data.normalizer,
        &data.test,
        provenance(cfg, "pretrain", cfg.arch.variant, hours, &data.name, cfg.train.seed),
    )?;
    let baseline = lower_bound_baseline(
        &data.test,
        &data.normalizer,
        provenance(cfg, "lower_bound", cfg.arch.variant, 0, &data.name, cfg.train.seed),
    )?;
    let mut bundle = init_params(
        &cfg.arch,
        data.station_count(),
        cfg.window.window_length,
        cfg.train.seed,
    );
    bundle.encoder = model.encoder;
    bundle.head = model.head;
    let checkpoint = Checkpoint {
        meta: CheckpointMeta::new(
            &cfg.arch,
            data.station_count(),
            cfg.window,
            Some(data.normalizer.clone()),
            Stage::Pretrain,
            cfg.train.seed,
        ),
        bundle,
    };
    Ok(PretrainOutcome {
        checkpoint,
        trace,
        test,
        baseline,
    })
}

pub struct AdaptOutcome {
    pub checkpoint: Checkpoint,
    pub trace: TrainTrace,
    pub before: AlignmentStats,
    pub after: AlignmentStats,
    /// Target test-split scores of the spliced model.
    pub test: Prediction,
}

/// Flattened features of the source and target test windows.
pub fn alignment(
    source_encoder: &EncoderParams,
    target_encoder: &EncoderParams,
    source: &Prepared,
    target: &Prepared,
) -> Result<AlignmentStats> {
    feature_alignment_stats(
        &encode_all(source_encoder, &source.test),
        &encode_all(target_encoder, &target.test),
        source_encoder.output_channels(),
    )
}

/// Stage 2: aligns a target encoder to the pretrained source encoder using
/// target rainfall only, then scores the spliced model on the target test
/// split. Target test labels feed the per-epoch ratio probe and the final
/// report, never a gradient.
pub fn run_adapt(
    source: &Prepared,
    target: &Prepared,
    pretrained: &Checkpoint,
    cfg: &RunConfig,
) -> Result<AdaptOutcome> {
    pretrained
        .meta
        .expect(&cfg.arch, source.station_count(), cfg.window.window_length)?;
    if cfg.arch.variant != Variant::RainfallEncoder {
        return Err(Error::Config("adaptation needs the rainfall-encoder variant".into()));
    }
    let source_encoder = &pretrained.bundle.encoder;
    let head = &pretrained.bundle.head;
    let unlabeled = strip_labels(&target.train);
    let probe = Probe {
        samples: &target.test,
        head,
        normalizer: &target.normalizer,
    };
    let initial =
        crate::training::initial_target_encoder(source_encoder, &cfg.arch, target.station_count(), &cfg.adapt);
    let before = alignment(source_encoder, &initial, source, target)?;
    let outcome = adapt(
        &unlabeled,
        &source.train,
        source_encoder,
        &cfg.arch,
        &cfg.adapt,
        Some(probe),
    )?;
    let after = alignment(source_encoder, &outcome.encoder, source, target)?;
    let spliced = Forecaster {
        encoder: outcome.encoder.clone(),
        head: head.clone(),
        variant: Variant::RainfallEncoder,
    };
    let test = predict(
        &spliced,
        &target.normalizer,
        &target.test,
        provenance(cfg, "adapt", Variant::RainfallEncoder, 0, &target.name, cfg.adapt.seed),
    )?;
    let checkpoint = Checkpoint {
        meta: CheckpointMeta::new(
            &cfg.arch,
            target.station_count(),
            cfg.window,
            Some(target.normalizer.clone()),
            Stage::Adapt,
            cfg.adapt.seed,
        ),
        bundle: ModelBundle {
            arch: cfg.arch.clone(),
            station_count: target.station_count(),
            window_length: cfg.window.window_length,
            encoder: outcome.encoder,
            head: head.clone(),
            critic: outcome.critic,
        },
    };
    Ok(AdaptOutcome {
        checkpoint,
        trace: outcome.trace,
        before,
        after,
        test,
    })
}

/// Spliced evaluation from saved checkpoints: the adapted encoder with the
/// pretrained head.
pub fn run_evaluate(
    pretrained: &Checkpoint,
    adapted: &Checkpoint,
    target: &Prepared,
    cfg: &RunConfig,
) -> Result<(Prediction, Prediction)> {
    adapted
        .meta
        .expect(&cfg.arch, target.station_count(), cfg.window.window_length)?;
    if pretrained.meta.arch != adapted.meta.arch {
        return Err(Error::ArchitectureMismatch {
            field: "arch".into(),
            expected: "pretrain and adapt checkpoints with one architecture".into(),
            found: "differing architectures".into(),
        });
    }
    let spliced = Forecaster {
        encoder: adapted.bundle.encoder.clone(),
        head: pretrained.bundle.head.clone(),
        variant: Variant::RainfallEncoder,
    };
    let report = predict(
        &spliced,
        &target.normalizer,
        &target.test,
        provenance(
            cfg,
            "adapt",
            Variant::RainfallEncoder,
            0,
            &target.name,
            adapted.meta.seed,
        ),
    )?;
    let baseline = lower_bound_baseline(
        &target.test,
        &target.normalizer,
        provenance(
            cfg,
            "lower_bound",
            Variant::RainfallEncoder,
            0,
            &target.name,
            adapted.meta.seed,
        ),
    )?;
    Ok((report, baseline))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
