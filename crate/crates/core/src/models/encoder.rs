use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, RngCore};

use super::layers::{relu, relu_backward, CausalConv1d, Parameters, Pointwise};
use super::ArchConfig;
use crate::error::{Error, Result};

/// One temporal block: dilated causal conv, ReLU, dropout, then an additive
/// skip (1×1-projected when the channel count changes).
#[derive(Debug, Clone, PartialEq)]
pub struct TcnBlock {
    pub conv: CausalConv1d,
    pub skip: Option<Pointwise>,
}

/// Rainfall encoder: a stack of [`TcnBlock`]s mapping `(d, T)` windows to
/// `(channels, T)` feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub blocks: Vec<TcnBlock>,
    pub dropout: f64,
}

struct BlockCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Forward activations kept for the backward pass.
pub struct EncoderPass {
    pub output: Array2<f64>,
    len: usize,
    blocks: Vec<BlockCache>,
}

impl EncoderParams {
    pub fn zeros(arch: &ArchConfig, inputs: usize) -> Self {
        let mut blocks = Vec::with_capacity(arch.dilations.len());
        let mut width = inputs;
        for &dilation in &arch.dilations {
            blocks.push(TcnBlock {
                conv: CausalConv1d::zeros(width, arch.channels, arch.kernel_size, dilation),
                skip: (width != arch.channels).then(|| Pointwise::zeros(width, arch.channels)),
            });
            width = arch.channels;
        }
        Self {
            blocks,
            dropout: arch.dropout,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        for block in &mut self.blocks {
            block.conv.init(rng);
            if let Some(skip) = &mut block.skip {
                skip.init(rng);
            }
        }
    }

    pub fn input_channels(&self) -> usize {
        self.blocks[0].conv.inputs()
    }

    pub fn output_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.conv.outputs())
    }

    /// `1 + Σ dilation·(kernel − 1)` time steps.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| b.conv.dilation * (b.conv.kernel() - 1))
            .sum::<usize>()
    }

    /// Batched forward over `(d, batch·len)`. Dropout is active iff `rng` is given.
    pub fn forward_batch(&self, x: &Array2<f64>, len: usize, mut rng: Option<&mut dyn RngCore>) -> EncoderPass {
        let keep = 1.0 - self.dropout;
        let mut current = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let pre = block.conv.forward(&current, len);
            let mut act = relu(&pre);
            let mask =
                match rng.as_deref_mut() {
                    Some(rng) if self.dropout > 0.0 => {
                        let mask = Array2::from_shape_fn(act.raw_dim(), |_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        });
                        act *= &mask;
                        Some(mask)
                    }
                    _ => None,
                };
            let out = match &block.skip {
                Some(skip) => act + skip.forward(&current),
                None => act + &current,
            };
            caches.push(BlockCache {
                input: std::mem::replace(&mut current, out),
                pre,
                mask,
            });
        }
        EncoderPass {
            output: current,
            len,
            blocks: caches,
        }
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&self, pass: &EncoderPass, grad_out: &Array2<f64>, grads: &mut EncoderParams) -> Array2<f64> {
        let mut grad = grad_out.clone();
        for ((block, cache), gblock) in self.blocks.iter().zip(&pass.blocks).zip(grads.blocks.iter_mut()).rev() {
            let mut grad_act = grad.clone();
            if let Some(mask) = &cache.mask {
                grad_act *= mask;
            }
            let grad_pre = relu_backward(&cache.pre, &grad_act);
            let mut grad_in = block.conv.backward(&cache.input, pass.len, &grad_pre, &mut gblock.conv);
            match (&block.skip, &mut gblock.skip) {
                (Some(skip), Some(gskip)) => grad_in += &skip.backward(&cache.input, &grad, gskip),
                _ => grad_in += &grad,
            }
            grad = grad_in;
        }
        grad
    }

    /// Single-window forward: `(d, T)` rainfall to a `(channels, T)` feature map.
    pub fn forward(&self, x: &Array2<f64>, rng: Option<&mut dyn RngCore>) -> Result<Array2<f64>> {
        let (d, len) = x.dim();
        if d != self.input_channels() {
            return Err(Error::Dimension(format!(
                "encoder expects {} input channels, window has {d}",
                self.input_channels()
            )));
        }
        if len < self.receptive_field() {
            return Err(Error::Dimension(format!(
                "window length {len} is shorter than the receptive field {}",
                self.receptive_field()
            )));
        }
        Ok(self.forward_batch(x, len, rng).output)
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("encoder.block{i}.conv.weight"), b.conv.weight.view().into_dyn()));
            out.push((format!("encoder.block{i}.conv.bias"), b.conv.bias.view().into_dyn()));
            if let Some(skip) = &b.skip {
                out.push((format!("encoder.block{i}.skip.weight"), skip.weight.view().into_dyn()));
                out.push((format!("encoder.block{i}.skip.bias"), skip.bias.view().into_dyn()));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(b.conv.weight.view_mut().into_dyn());
            out.push(b.conv.bias.view_mut().into_dyn());
            if let Some(skip) = &mut b.skip {
                out.push(skip.weight.view_mut().into_dyn());
                out.push(skip.bias.view_mut().into_dyn());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_encoder(d: usize, seed: u64) -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = EncoderParams::zeros(&ArchConfig::default(), d);
        enc.init(&mut rng);
        for b in &mut enc.blocks {
            b.conv.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        enc
    }

    fn random_window(d: usize, len: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((d, len), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn shapes_and_receptive_field() {
        let enc = EncoderParams::zeros(&ArchConfig::default(), 11);
        assert_eq!(enc.receptive_field(), 8);
        assert_eq!(enc.blocks[0].conv.weight.dim(), (36, 11, 2));
        assert!(enc.blocks[0].skip.is_some());
        assert!(enc.blocks[1].skip.is_none());
        for (d, len) in [(1, 8), (7, 24), (11, 30)] {
            let out = random_encoder(d, 1).forward(&random_window(d, len, 2), None).unwrap();
            assert_eq!(out.dim(), (36, len));
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        let mut enc = random_encoder(5, 3);
        for b in &mut enc.blocks {
            b.conv.bias.fill(0.0);
        }
        let out = enc.forward(&Array2::zeros((5, 24)), None).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_shapes() {
        let enc = random_encoder(5, 3);
        assert!(matches!(
            enc.forward(&Array2::zeros((4, 24)), None),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            enc.forward(&Array2::zeros((5, 7)), None),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn final_step_perturbation_only_moves_final_step() {
        let enc = random_encoder(3, 4);
        let x = random_window(3, 24, 5);
        let base = enc.forward(&x, None).unwrap();
        let mut bumped = x.clone();
        bumped[[1, 23]] += 0.5;
        let out = enc.forward(&bumped, None).unwrap();
        for s in 0..23 {
            assert_eq!(out.column(s), base.column(s));
        }
        assert!(out.column(23).iter().zip(base.column(23)).any(|(a, b)| a != b));
    }

    #[test]
    fn dropout_only_in_train_mode() {
        let enc = random_encoder(3, 6);
        let x = random_window(3, 24, 7);
        let eval_a = enc.forward(&x, None).unwrap();
        let eval_b = enc.forward(&x, None).unwrap();
        assert_eq!(eval_a, eval_b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = enc.forward(&x, Some(&mut rng)).unwrap();
        assert_ne!(train, eval_a);
    }

    #[test]
    fn batched_matches_per_sample() {
        let enc = random_encoder(4, 8);
        let a = random_window(4, 12, 1);
        let b = random_window(4, 12, 2);
        let batch = ndarray::concatenate![ndarray::Axis(1), a, b];
        let out = enc.forward_batch(&batch, 12, None).output;
        let oa = enc.forward(&a, None).unwrap();
        let ob = enc.forward(&b, None).unwrap();
        assert!((&out.slice(ndarray::s![.., 0..12]) - &oa)
            .iter()
            .all(|d| d.abs() < 1e-12));
        assert!((&out.slice(ndarray::s![.., 12..24]) - &ob)
            .iter()
            .all(|d| d.abs() < 1e-12));
    }
}
