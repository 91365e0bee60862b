use serde::{Deserialize, Serialize};

use crate::models::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adaptive moments with decoupled weight decay.
    AdamW,
    /// Root-mean-square propagation, also with decoupled weight decay.
    RmsProp,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMS_ALPHA: f64 = 0.99;
const EPS: f64 = 1e-8;

/// Optimizer state for one parameter container.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new<P: Parameters>(kind: OptimizerKind, weight_decay: f64, params: &P) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            kind,
            weight_decay,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let decay = 1.0 - lr * self.weight_decay;
        let grads = grads.tensors();
        for (i, mut param) in params.tensors_mut().into_iter().enumerate() {
            let grad = &grads[i].1;
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            match self.kind {
                OptimizerKind::AdamW => {
                    let bc1 = 1.0 - ADAM_BETA1.powi(t);
                    let bc2 = 1.0 - ADAM_BETA2.powi(t);
                    for (((p, &g), m), v) in param.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *p *= decay;
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
                    }
                }
                OptimizerKind::RmsProp => {
                    for ((p, &g), v) in param.iter_mut().zip(grad.iter()).zip(v.iter_mut()) {
                        *p *= decay;
                        *v = RMS_ALPHA * *v + (1.0 - RMS_ALPHA) * g * g;
                        *p -= lr * g / (v.sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Cosine decay from `base` at step 0 to zero at the final step.
pub fn cosine_lr(base: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps <= 1 {
        return base;
    }
    let progress = step.min(total_steps - 1) as f64 / (total_steps - 1) as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
}
