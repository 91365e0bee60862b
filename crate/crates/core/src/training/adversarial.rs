//! Wasserstein critic losses with gradient penalty, and the adaptation loop
//! that aligns a target-watershed encoder with a frozen source encoder.

use std::time::Instant;

use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::batch::{rainfall_batch, Forecaster};
use super::optim::{cosine_lr, Optimizer};
use super::pretrain::{stream_rng, SHUFFLE_STREAM_BASE};
use super::trace::{EpochRecord, TrainTrace};
use super::AdaptConfig;
use crate::error::{Error, Result};
use crate::hydrodata::{Normalizer, WindowedSample};
use crate::models::{
    flatten_features, rows_finite, unflatten_features, ArchConfig, Critic, CriticParams, EncoderParams, HeadParams,
    Parameters, Variant,
};

const INIT_STREAM: u64 = 2;
const SOURCE_STREAM: u64 = 3;
const EPS_STREAM: u64 = 4;

/// `−mean_b D(F_target,b)`.
pub fn generator_loss<C: Critic + ?Sized>(critic: &C, target: &Array2<f64>) -> f64 {
    -mean(&critic.scores(target))
}

/// `ε_b·F_target,b + (1 − ε_b)·F_source,b`, one ε per row.
pub fn interpolate(source: &Array2<f64>, target: &Array2<f64>, eps: &[f64]) -> Array2<f64> {
    let mut out = source.clone();
    for ((mut row, t), &e) in out.axis_iter_mut(Axis(0)).zip(target.axis_iter(Axis(0))).zip(eps) {
        row.zip_mut_with(&t, |s, &t| *s = e * t + (1.0 - e) * *s);
    }
    out
}

/// `mean_b (‖∇D(F̃_b)‖₂ − 1)²` at the interpolates.
pub fn gradient_penalty<C: Critic + ?Sized>(
    critic: &C,
    source: &Array2<f64>,
    target: &Array2<f64>,
    eps: &[f64],
) -> f64 {
    let mixed = interpolate(source, target, eps);
    let grads = critic.input_gradients(&mixed);
    let total: f64 = grads.axis_iter(Axis(0)).map(|g| (g.dot(&g).sqrt() - 1.0).powi(2)).sum();
    total / source.nrows() as f64
}

/// `mean D(F_target) − mean D(F_source) + w_gp · penalty`.
pub fn critic_loss<C: Critic + ?Sized>(
    critic: &C,
    source: &Array2<f64>,
    target: &Array2<f64>,
    eps: &[f64],
    gp_weight: f64,
) -> f64 {
    mean(&critic.scores(target)) - mean(&critic.scores(source))
        + gp_weight * gradient_penalty(critic, source, target, eps)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_batches(source: &Array2<f64>, target: &Array2<f64>, eps: &[f64]) -> Result<()> {
    if source.dim() != target.dim() || eps.len() != source.nrows() || source.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "source {:?}, target {:?} and {} interpolation weights must agree",
            source.dim(),
            target.dim(),
            eps.len()
        )));
    }
    Ok(())
}

/// Critic loss together with its gradient w.r.t. the critic parameters.
pub fn critic_loss_and_grads(
    critic: &CriticParams,
    source: &Array2<f64>,
    target: &Array2<f64>,
    eps: &[f64],
    gp_weight: f64,
) -> Result<(f64, CriticParams)> {
    check_batches(source, target, eps)?;
    let batch = source.nrows();
    let inv = 1.0 / batch as f64;
    let mut grads = critic.zeroed();

    let tpass = critic.forward(target);
    critic.backward(&tpass, &vec![inv; batch], &mut grads);
    let spass = critic.forward(source);
    critic.backward(&spass, &vec![-inv; batch], &mut grads);

    let mixed = interpolate(source, target, eps);
    let g = critic.input_gradients(&mixed);
    let mut penalty = 0.0;
    let mut dpdg = g.clone();
    for mut row in dpdg.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        penalty += (norm - 1.0).powi(2);
        // At ‖g‖ = 0 the direction is undefined; take the zero subgradient.
        let scale = if norm > 0.0 {
            gp_weight * 2.0 * (norm - 1.0) / norm * inv
        } else {
            0.0
        };
        row.mapv_inplace(|v| v * scale);
    }
    critic.input_gradient_backward(&mixed, &dpdg, &mut grads);
    let loss = mean(&tpass.scores) - mean(&spass.scores) + gp_weight * penalty * inv;
    Ok((loss, grads))
}

/// Generator loss of a batch of rainfall windows `(d, batch·len)` and its
/// gradient w.r.t. the target encoder. The critic is held fixed.
pub fn generator_loss_and_grads(
    critic: &CriticParams,
    encoder: &EncoderParams,
    x: &Array2<f64>,
    len: usize,
) -> (f64, EncoderParams) {
    let pass = encoder.forward_batch(x, len, None);
    let flat = flatten_features(&pass.output, len);
    let cpass = critic.forward(&flat);
    let batch = flat.nrows();
    let loss = -mean(&cpass.scores);
    let mut unused = critic.zeroed();
    let grad_flat = critic.backward(&cpass, &vec![-1.0 / batch as f64; batch], &mut unused);
    let grad_features = unflatten_features(&grad_flat, encoder.output_channels(), len);
    let mut grads = encoder.zeroed();
    encoder.backward(&pass, &grad_features, &mut grads);
    (loss, grads)
}

/// Flattened evaluation-mode features `(n, channels·T)` of every window.
pub fn encode_all(encoder: &EncoderParams, samples: &[WindowedSample]) -> Array2<f64> {
    if samples.is_empty() {
        return Array2::zeros((0, 0));
    }
    let len = samples[0].x.ncols();
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut rows = Vec::with_capacity(samples.len());
    for chunk in all.chunks(256) {
        let x = rainfall_batch(samples, chunk, len);
        rows.push(flatten_features(&encoder.forward_batch(&x, len, None).output, len));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("uniform feature width")
}

/// Labeled target windows used only to log `mean(Y/Ŷ)` after each epoch.
/// Nothing computed from them reaches a gradient.
#[derive(Clone, Copy)]
pub struct Probe<'a> {
    pub samples: &'a [WindowedSample],
    pub head: &'a HeadParams,
    pub normalizer: &'a Normalizer,
}

impl Probe<'_> {
    /// Mean of truth/prediction in original units over windows whose
    /// prediction is positive.
    pub fn ratio(&self, encoder: &EncoderParams) -> f64 {
        let model = Forecaster {
            encoder: encoder.clone(),
            head: self.head.clone(),
            variant: Variant::RainfallEncoder,
        };
        let preds = model.predict(self.samples);
        let (sum, n) = preds
            .iter()
            .zip(self.samples)
            .filter_map(|(&p, s)| {
                let pred = self.normalizer.invert_runoff(p);
                let truth = self.normalizer.invert_runoff(s.y?);
                (pred > 0.0).then(|| truth / pred)
            })
            .fold((0.0, 0usize), |(sum, n), r| (sum + r, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

pub struct AdaptOutcome {
    pub encoder: EncoderParams,
    pub critic: CriticParams,
    pub trace: TrainTrace,
}

/// Target encoder at the start of adaptation: a copy of the source encoder
/// with the first block re-initialized when the station counts differ, or a
/// fresh encoder when warm starting is off.
pub fn initial_target_encoder(
    source_encoder: &EncoderParams,
    arch: &ArchConfig,
    target_stations: usize,
    cfg: &AdaptConfig,
) -> EncoderParams {
    let mut rng = stream_rng(cfg.seed, INIT_STREAM);
    if !cfg.warm_start {
        let mut enc = arch.new_encoder(target_stations);
        enc.init(&mut rng);
        return enc;
    }
    let mut enc = source_encoder.clone();
    if source_encoder.input_channels() != target_stations {
        let fresh = arch.new_encoder(target_stations);
        enc.blocks[0] = fresh.blocks[0].clone();
        enc.blocks[0].conv.init(&mut rng);
        if let Some(skip) = &mut enc.blocks[0].skip {
            skip.init(&mut rng);
        }
    }
    enc
}

/// Adversarial alignment of a target encoder against the frozen source
/// encoder.
///
/// One epoch is one pass over the shuffled target windows in batches; each
/// batch drives one update, cycling through `critic_steps` critic updates
/// followed by one target-encoder update. Every critic update pairs its
/// target batch with a fresh batch of source features. Both encoders run
/// without dropout. Only rainfall is read from `target_train`.
pub fn adapt(
    target_train: &[WindowedSample],
    source_train: &[WindowedSample],
    source_encoder: &EncoderParams,
    arch: &ArchConfig,
    cfg: &AdaptConfig,
    probe: Option<Probe<'_>>,
) -> Result<AdaptOutcome> {
    cfg.validate()?;
    if target_train.is_empty() || source_train.is_empty() {
        return Err(Error::Size("adaptation needs source and target windows".into()));
    }
    let len = target_train[0].x.ncols();
    if source_train[0].x.ncols() != len {
        return Err(Error::Dimension(format!(
            "source windows have {} steps, target windows {len}",
            source_train[0].x.ncols()
        )));
    }
    if source_train[0].x.nrows() != source_encoder.input_channels() {
        return Err(Error::Dimension(
            "source windows do not match the source encoder".into(),
        ));
    }

    let target_stations = target_train[0].x.nrows();
    let mut encoder = initial_target_encoder(source_encoder, arch, target_stations, cfg);
    let mut critic = arch.new_critic(len);
    critic.init(&mut stream_rng(cfg.seed ^ 0x5eed, INIT_STREAM));

    let source_features = encode_all(source_encoder, source_train);
    if !rows_finite(&source_features) {
        return Err(Error::Divergence {
            step: 0,
            last_finite: f64::NAN,
        });
    }

    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, &encoder);
    let mut critic_opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, &critic);
    let mut source_rng = stream_rng(cfg.seed, SOURCE_STREAM);
    let mut eps_rng = stream_rng(cfg.seed, EPS_STREAM);
    let mut source_order: Vec<usize> = (0..source_train.len()).collect();
    source_order.shuffle(&mut source_rng);
    let mut source_cursor = 0usize;

    let batches_per_epoch = target_train.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let cycle = cfg.critic_steps + 1;
    let mut order: Vec<usize> = (0..target_train.len()).collect();
    let mut trace = TrainTrace::default();
    let mut step = 0usize;
    let mut last_finite = f64::NAN;
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, SHUFFLE_STREAM_BASE + epoch as u64));
        let (mut g_sum, mut g_n, mut d_sum, mut d_n) = (0.0, 0usize, 0.0, 0usize);
        let mut lr = cfg.learning_rate;
        for batch in order.chunks(cfg.batch_size) {
            lr = cosine_lr(cfg.learning_rate, step, total_steps);
            let x = rainfall_batch(target_train, batch, len);
            let loss = if step % cycle < cfg.critic_steps {
                let mut rows = Vec::with_capacity(batch.len());
                for _ in 0..batch.len() {
                    if source_cursor == source_order.len() {
                        source_order.shuffle(&mut source_rng);
                        source_cursor = 0;
                    }
                    rows.push(source_order[source_cursor]);
                    source_cursor += 1;
                }
                let source = source_features.select(Axis(0), &rows);
                let target = flatten_features(&encoder.forward_batch(&x, len, None).output, len);
                let eps: Vec<f64> = (0..batch.len()).map(|_| eps_rng.random::<f64>()).collect();
                let (loss, grads) = critic_loss_and_grads(&critic, &source, &target, &eps, cfg.gp_weight)?;
                if loss.is_finite() {
                    critic_opt.step(&mut critic, &grads, lr);
                    d_sum += loss;
                    d_n += 1;
                }
                loss
            } else {
                let (loss, grads) = generator_loss_and_grads(&critic, &encoder, &x, len);
                if loss.is_finite() {
                    enc_opt.step(&mut encoder, &grads, lr);
                    g_sum += loss;
                    g_n += 1;
                }
                loss
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { step, last_finite });
            }
            last_finite = loss;
            step += 1;
        }
        let probe_ratio = probe.map(|p| p.ratio(&encoder));
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: None,
            generator_loss: (g_n > 0).then(|| g_sum / g_n as f64),
            critic_loss: (d_n > 0).then(|| d_sum / d_n as f64),
            lr,
            probe_ratio,
            diverged: false,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        debug!(
            "adapt epoch {} L_G {:?} L_D {:?} ratio {:?}",
            record.epoch, record.generator_loss, record.critic_loss, record.probe_ratio
        );
        trace.records.push(record);
    }
    info!("adapted target encoder over {} epochs ({step} updates)", cfg.epochs);
    Ok(AdaptOutcome { encoder, critic, trace })
}
