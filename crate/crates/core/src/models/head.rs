use ndarray::{s, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{crop_tail, relu, relu_backward, uncrop_tail, CausalConv1d, Parameters};
use crate::error::{Error, Result};

/// Kernel sizes of the three head convolutions.
pub const HEAD_KERNELS: [usize; 3] = [2, 2, 3];

/// Time steps of head input that reach the final output step.
pub const HEAD_CONTEXT: usize = 1 + (HEAD_KERNELS[0] - 1) + (HEAD_KERNELS[1] - 1) + (HEAD_KERNELS[2] - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Prediction is the head output.
    Direct,
    /// Prediction is the last observed runoff plus the head output.
    Residual,
}

/// Prediction head: conv(k=2) → ReLU → conv(k=2) → ReLU → conv(k=3, one
/// filter). The scalar is the final time step of the one-channel output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub layers: Vec<CausalConv1d>,
    pub mode: HeadMode,
    /// Whether the historical-runoff channel is concatenated to the features.
    pub runoff_input: bool,
}

pub struct HeadPass {
    pub predictions: Vec<f64>,
    len: usize,
    inputs: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
}

impl HeadParams {
    pub fn zeros(feature_channels: usize, width: usize, mode: HeadMode, runoff_input: bool) -> Self {
        let inputs = feature_channels + usize::from(runoff_input);
        Self {
            layers: vec![
                CausalConv1d::zeros(inputs, width, HEAD_KERNELS[0], 1),
                CausalConv1d::zeros(width, width, HEAD_KERNELS[1], 1),
                CausalConv1d::zeros(width, 1, HEAD_KERNELS[2], 1),
            ],
            mode,
            runoff_input,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init(rng);
        }
    }

    pub fn feature_channels(&self) -> usize {
        self.layers[0].inputs() - usize::from(self.runoff_input)
    }

    /// Batched forward. `features` is `(channels, batch·len)`, `history` is
    /// `(batch, len)` in normalized units.
    pub fn forward_batch(&self, features: &Array2<f64>, history: &Array2<f64>, len: usize) -> HeadPass {
        let ctx = HEAD_CONTEXT.min(len);
        let batch = history.nrows();
        let cropped = crop_tail(features, len, ctx);
        let mut input = if self.runoff_input {
            let mut joined = Array2::zeros((cropped.nrows() + 1, batch * ctx));
            joined.slice_mut(s![..cropped.nrows(), ..]).assign(&cropped);
            for b in 0..batch {
                joined
                    .slice_mut(s![cropped.nrows(), b * ctx..(b + 1) * ctx])
                    .assign(&history.slice(s![b, len - ctx..]));
            }
            joined
        } else {
            cropped
        };

        let mut inputs = Vec::with_capacity(3);
        let mut pres = Vec::with_capacity(3);
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&input, ctx);
            let next = if i + 1 < self.layers.len() {
                relu(&pre)
            } else {
                pre.clone()
            };
            inputs.push(std::mem::replace(&mut input, next));
            pres.push(pre);
        }
        let predictions = (0..batch)
            .map(|b| {
                let delta = input[[0, b * ctx + ctx - 1]];
                match self.mode {
                    HeadMode::Direct => delta,
                    HeadMode::Residual => history[[b, len - 1]] + delta,
                }
            })
            .collect();
        HeadPass {
            predictions,
            len,
            inputs,
            pres,
        }
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the
    /// `(channels, batch·len)` features.
    pub fn backward(&self, pass: &HeadPass, grad_predictions: &[f64], grads: &mut HeadParams) -> Array2<f64> {
        let ctx = HEAD_CONTEXT.min(pass.len);
        let batch = grad_predictions.len();
        let mut grad = Array2::zeros((1, batch * ctx));
        for (b, g) in grad_predictions.iter().enumerate() {
            grad[[0, b * ctx + ctx - 1]] = *g;
        }
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                grad = relu_backward(&pass.pres[i], &grad);
            }
            grad = self.layers[i].backward(&pass.inputs[i], ctx, &grad, &mut grads.layers[i]);
        }
        let features = self.feature_channels();
        uncrop_tail(&grad.slice(s![..features, ..]).to_owned(), ctx, pass.len)
    }

    /// Single-sample prediction from a `(channels, T)` feature map.
    pub fn forward(&self, features: &Array2<f64>, y_history: &[f64]) -> Result<f64> {
        let (channels, len) = features.dim();
        if channels != self.feature_channels() {
            return Err(Error::Dimension(format!(
                "head expects {} feature channels, got {channels}",
                self.feature_channels()
            )));
        }
        if y_history.len() != len {
            return Err(Error::Dimension(format!(
                "runoff history has {} steps, features have {len}",
                y_history.len()
            )));
        }
        let history = Array2::from_shape_vec((1, len), y_history.to_vec()).expect("shape checked");
        Ok(self.forward_batch(features, &history, len).predictions[0])
    }
}

impl Parameters for HeadParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("head.conv{i}.weight"), layer.weight.view().into_dyn()));
            out.push((format!("head.conv{i}.bias"), layer.bias.view().into_dyn()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weight.view_mut().into_dyn());
            out.push(layer.bias.view_mut().into_dyn());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_head(mode: HeadMode, seed: u64) -> HeadParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = HeadParams::zeros(36, 36, mode, true);
        head.init(&mut rng);
        for l in &mut head.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        head
    }

    fn inputs(seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Array2::from_shape_fn((36, 24), |_| rng.random_range(-1.0..1.0));
        let y = (0..24).map(|_| rng.random_range(0.0..1.0)).collect();
        (f, y)
    }

    #[test]
    fn context_is_five_steps() {
        assert_eq!(HEAD_CONTEXT, 5);
        assert_eq!(HeadParams::zeros(36, 36, HeadMode::Direct, true).layers[0].inputs(), 37);
    }

    #[test]
    fn zero_head_is_persistence_or_zero() {
        let (f, y) = inputs(1);
        let residual = HeadParams::zeros(36, 36, HeadMode::Residual, true);
        assert_eq!(residual.forward(&f, &y).unwrap(), y[23]);
        let direct = HeadParams::zeros(36, 36, HeadMode::Direct, true);
        assert_eq!(direct.forward(&f, &y).unwrap(), 0.0);
    }

    #[test]
    fn residual_minus_direct_is_last_runoff() {
        let (f, y) = inputs(2);
        let mut head = random_head(HeadMode::Direct, 3);
        let direct = head.forward(&f, &y).unwrap();
        head.mode = HeadMode::Residual;
        let residual = head.forward(&f, &y).unwrap();
        assert!((residual - direct - y[23]).abs() < 1e-15);
    }

    #[test]
    fn cropping_matches_full_length_evaluation() {
        // Reference: run the convolutions over the whole window without cropping.
        let head = random_head(HeadMode::Direct, 4);
        let (f, y) = inputs(5);
        let mut x = Array2::zeros((37, 24));
        x.slice_mut(s![..36, ..]).assign(&f);
        x.row_mut(36).assign(&ndarray::Array1::from(y.clone()));
        let h1 = relu(&head.layers[0].forward(&x, 24));
        let h2 = relu(&head.layers[1].forward(&h1, 24));
        let out = head.layers[2].forward(&h2, 24);
        let full = out[[0, 23]];
        assert!((head.forward(&f, &y).unwrap() - full).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let head = random_head(HeadMode::Residual, 6);
        let (f, y) = inputs(7);
        assert!(head.forward(&f.slice(s![..35, ..]).to_owned(), &y).is_err());
        assert!(head.forward(&f, &y[..23]).is_err());
    }
}
