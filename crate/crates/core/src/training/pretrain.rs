use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::Forecaster;
use super::optim::{cosine_lr, Optimizer};
use super::trace::{EpochRecord, TrainTrace};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::hydrodata::WindowedSample;
use crate::models::{init_params, ArchConfig};

/// Stream ids carved out of the run seed so shuffling, dropout and
/// initialization never share random numbers.
pub(crate) const DROPOUT_STREAM: u64 = 1;
pub(crate) const SHUFFLE_STREAM_BASE: u64 = 1 << 32;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh forecaster for `stations` gauges, initialized from `seed`.
pub fn new_forecaster(arch: &ArchConfig, stations: usize, window_length: usize, seed: u64) -> Forecaster {
    let bundle = init_params(arch, stations, window_length, seed);
    Forecaster {
        encoder: bundle.encoder,
        head: bundle.head,
        variant: arch.variant,
    }
}

/// Supervised training of encoder and head on labeled windows, minimizing
/// the batch-mean squared error.
pub fn pretrain(samples: &[WindowedSample], cfg: &TrainConfig, arch: &ArchConfig) -> Result<(Forecaster, TrainTrace)> {
    if samples.is_empty() {
        return Err(Error::Size("pretraining needs at least one labeled window".into()));
    }
    let stations = samples[0].x.nrows();
    let window_length = samples[0].x.ncols();
    let model = new_forecaster(arch, stations, window_length, cfg.seed);
    train_forecaster(model, samples, cfg)
}

/// Continues training `model` on `samples`.
pub fn train_forecaster(
    mut model: Forecaster,
    samples: &[WindowedSample],
    cfg: &TrainConfig,
) -> Result<(Forecaster, TrainTrace)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Size("training needs at least one labeled window".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.y.is_none()) {
        return Err(Error::Argument(format!(
            "supervised training got an unlabeled window at {}",
            bad.source_index
        )));
    }
    let input_channels = model.encoder.input_channels();
    let expected = match model.variant {
        crate::models::Variant::RainfallEncoder => samples[0].x.nrows(),
        crate::models::Variant::JointEncoder => samples[0].x.nrows() + 1,
    };
    if input_channels != expected {
        return Err(Error::Dimension(format!(
            "encoder takes {input_channels} channels but the windows provide {expected}"
        )));
    }

    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, &model.encoder);
    let mut head_opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, &model.head);
    let mut dropout_rng = stream_rng(cfg.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = TrainTrace::default();
    let mut step = 0usize;
    let mut last_finite = f64::NAN;
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, SHUFFLE_STREAM_BASE + epoch as u64));
        let mut weighted = 0.0;
        let mut lr = cfg.learning_rate;
        for batch in order.chunks(cfg.batch_size) {
            lr = cosine_lr(cfg.learning_rate, step, total_steps);
            let out = model.loss_and_grads(samples, batch, Some(&mut dropout_rng));
            if !out.loss.is_finite() {
                return Err(Error::Divergence { step, last_finite });
            }
            last_finite = out.loss;
            weighted += out.loss * batch.len() as f64;
            enc_opt.step(&mut model.encoder, &out.encoder_grads, lr);
            head_opt.step(&mut model.head, &out.head_grads, lr);
            step += 1;
        }
        let loss = weighted / samples.len() as f64;
        debug!("epoch {} loss {loss:.6e} lr {lr:.3e}", epoch + 1);
        trace.records.push(EpochRecord {
            epoch: epoch + 1,
            loss: Some(loss),
            generator_loss: None,
            critic_loss: None,
            lr,
            probe_ratio: None,
            diverged: false,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    info!(
        "trained {} epochs over {} windows, final loss {:.4e}",
        cfg.epochs,
        samples.len(),
        trace.last().and_then(|r| r.loss).unwrap_or(f64::NAN)
    );
    Ok((model, trace))
}
