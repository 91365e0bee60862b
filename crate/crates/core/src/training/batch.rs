use ndarray::{s, Array2};
use rand::RngCore;

use crate::hydrodata::WindowedSample;
use crate::models::{EncoderParams, HeadParams, Parameters, Variant};

/// Encoder input for `indices`, keeping the trailing `keep` steps of each
/// window. Reads rainfall only, so unlabeled windows are safe to pass.
pub fn rainfall_batch(samples: &[WindowedSample], indices: &[usize], keep: usize) -> Array2<f64> {
    let d = samples[indices[0]].x.nrows();
    let mut x = Array2::zeros((d, indices.len() * keep));
    for (b, &i) in indices.iter().enumerate() {
        let w = &samples[i].x;
        let len = w.ncols();
        x.slice_mut(s![.., b * keep..(b + 1) * keep])
            .assign(&w.slice(s![.., len - keep..]));
    }
    x
}

/// Runoff history `(batch, keep)`.
pub fn history_batch(samples: &[WindowedSample], indices: &[usize], keep: usize) -> Array2<f64> {
    let mut h = Array2::zeros((indices.len(), keep));
    for (b, &i) in indices.iter().enumerate() {
        let y = &samples[i].y_history;
        for (k, v) in y[y.len() - keep..].iter().enumerate() {
            h[[b, k]] = *v;
        }
    }
    h
}

/// Encoder input for a forecaster: rainfall, plus the runoff history as an
/// extra channel for the joint variant.
pub fn forecaster_input(
    samples: &[WindowedSample],
    indices: &[usize],
    keep: usize,
    variant: Variant,
    history: &Array2<f64>,
) -> Array2<f64> {
    let rain = rainfall_batch(samples, indices, keep);
    match variant {
        Variant::RainfallEncoder => rain,
        Variant::JointEncoder => {
            let d = rain.nrows();
            let mut x = Array2::zeros((d + 1, rain.ncols()));
            x.slice_mut(s![..d, ..]).assign(&rain);
            for b in 0..indices.len() {
                x.slice_mut(s![d, b * keep..(b + 1) * keep]).assign(&history.row(b));
            }
            x
        }
    }
}

/// Encoder plus head used as one supervised model.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub encoder: EncoderParams,
    pub head: HeadParams,
    pub variant: Variant,
}

/// Result of a supervised forward/backward pass over one batch.
pub struct SupervisedStep {
    pub loss: f64,
    pub predictions: Vec<f64>,
    pub encoder_grads: EncoderParams,
    pub head_grads: HeadParams,
}

impl Forecaster {
    /// Steps of each window that reach the prediction.
    pub fn context(&self) -> usize {
        self.encoder.receptive_field() + crate::models::HEAD_CONTEXT - 1
    }

    fn keep(&self, samples: &[WindowedSample]) -> usize {
        self.context().min(samples[0].y_history.len())
    }

    /// Normalized predictions in evaluation mode.
    pub fn predict(&self, samples: &[WindowedSample]) -> Vec<f64> {
        if samples.is_empty() {
            return Vec::new();
        }
        let keep = self.keep(samples);
        let all: Vec<usize> = (0..samples.len()).collect();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in all.chunks(512) {
            let history = history_batch(samples, chunk, keep);
            let x = forecaster_input(samples, chunk, keep, self.variant, &history);
            let features = self.encoder.forward_batch(&x, keep, None).output;
            out.extend(self.head.forward_batch(&features, &history, keep).predictions);
        }
        out
    }

    /// Batch-mean squared error and its gradients. Dropout is active iff
    /// `rng` is given.
    pub fn loss_and_grads(
        &self,
        samples: &[WindowedSample],
        indices: &[usize],
        rng: Option<&mut dyn RngCore>,
    ) -> SupervisedStep {
        let keep = self.keep(samples);
        let history = history_batch(samples, indices, keep);
        let x = forecaster_input(samples, indices, keep, self.variant, &history);
        let targets: Vec<f64> = indices
            .iter()
            .map(|&i| samples[i].y.expect("supervised batches are labeled"))
            .collect();
        let enc_pass = self.encoder.forward_batch(&x, keep, rng);
        let head_pass = self.head.forward_batch(&enc_pass.output, &history, keep);
        let n = indices.len() as f64;
        let mut loss = 0.0;
        let grad_pred: Vec<f64> = head_pass
            .predictions
            .iter()
            .zip(&targets)
            .map(|(p, y)| {
                loss += (p - y) * (p - y);
                2.0 * (p - y) / n
            })
            .collect();
        let mut head_grads = self.head.zeroed();
        let mut encoder_grads = self.encoder.zeroed();
        let grad_features = self.head.backward(&head_pass, &grad_pred, &mut head_grads);
        self.encoder.backward(&enc_pass, &grad_features, &mut encoder_grads);
        SupervisedStep {
            loss: loss / n,
            predictions: head_pass.predictions,
            encoder_grads,
            head_grads,
        }
    }

    /// Mean squared error over `samples` in normalized units, evaluation mode.
    pub fn mean_loss(&self, samples: &[WindowedSample]) -> f64 {
        let preds = self.predict(samples);
        let total: f64 = preds
            .iter()
            .zip(samples)
            .map(|(p, s)| {
                let y = s.y.expect("labeled samples");
                (p - y) * (p - y)
            })
            .sum();
        total / samples.len() as f64
    }
}
