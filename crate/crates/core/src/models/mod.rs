//! Trainable components as explicit parameter containers with batched
//! forward and hand-written backward passes.

mod critic;
mod encoder;
mod head;
mod layers;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use critic::{Critic, CriticParams, CriticPass};
pub use encoder::{EncoderParams, EncoderPass, TcnBlock};
pub use head::{HeadMode, HeadParams, HeadPass, HEAD_CONTEXT, HEAD_KERNELS};
pub use layers::{add_advanced, crop_tail, delay, uncrop_tail, CausalConv1d, Parameters, Pointwise};

pub(crate) use critic::rows_finite;

/// A `(channels, T)` activation map for one window.
pub type FeatureMap = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Encoder sees rainfall only; runoff history joins in the head.
    RainfallEncoder,
    /// Encoder sees rainfall plus runoff history as one extra channel; the
    /// head sees features only. Supervised comparison only.
    JointEncoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub head_mode: HeadMode,
    pub variant: Variant,
    pub critic_hidden: usize,
    pub critic_slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            channels: 36,
            kernel_size: 2,
            dilations: vec![1, 2, 4],
            dropout: 0.2,
            head_mode: HeadMode::Residual,
            variant: Variant::RainfallEncoder,
            critic_hidden: 128,
            critic_slope: 0.2,
        }
    }
}

impl ArchConfig {
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations.iter().map(|d| d * (self.kernel_size - 1)).sum::<usize>()
    }

    /// Trailing window steps that influence a prediction; earlier steps can
    /// be dropped before encoding without changing the result.
    pub fn prediction_context(&self) -> usize {
        self.receptive_field() + HEAD_CONTEXT - 1
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.channels == 0 || self.kernel_size < 1 || self.dilations.is_empty() {
            return Err(crate::Error::Config(
                "encoder needs channels, a kernel and at least one layer".into(),
            ));
        }
        if self.dilations.contains(&0) {
            return Err(crate::Error::Config("dilations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(crate::Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.critic_hidden == 0 {
            return Err(crate::Error::Config("critic needs a hidden width".into()));
        }
        Ok(())
    }

    pub fn encoder_inputs(&self, stations: usize) -> usize {
        match self.variant {
            Variant::RainfallEncoder => stations,
            Variant::JointEncoder => stations + 1,
        }
    }

    pub fn new_encoder(&self, stations: usize) -> EncoderParams {
        EncoderParams::zeros(self, self.encoder_inputs(stations))
    }

    pub fn new_head(&self) -> HeadParams {
        match self.variant {
            Variant::RainfallEncoder => HeadParams::zeros(self.channels, self.channels, self.head_mode, true),
            Variant::JointEncoder => HeadParams::zeros(self.channels, self.channels, HeadMode::Direct, false),
        }
    }

    pub fn new_critic(&self, window_length: usize) -> CriticParams {
        CriticParams::zeros(self.channels * window_length, self.critic_hidden, self.critic_slope)
    }
}

/// Encoder, head and critic for one watershed plus the shape facts needed to
/// rebuild them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub station_count: usize,
    pub window_length: usize,
    pub encoder: EncoderParams,
    pub head: HeadParams,
    pub critic: CriticParams,
}

/// Fresh parameters: weights uniform in ±1/sqrt(fan_in), biases zero.
/// Draw order is encoder, head, critic.
pub fn init_params(arch: &ArchConfig, stations: usize, window_length: usize, seed: u64) -> ModelBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = arch.new_encoder(stations);
    encoder.init(&mut rng);
    let mut head = arch.new_head();
    head.init(&mut rng);
    let mut critic = arch.new_critic(window_length);
    critic.init(&mut rng);
    ModelBundle {
        arch: arch.clone(),
        station_count: stations,
        window_length,
        encoder,
        head,
        critic,
    }
}

/// `(channels, batch·len)` → `(batch, channels·len)`, channel-major per row.
pub fn flatten_features(features: &Array2<f64>, len: usize) -> Array2<f64> {
    let channels = features.nrows();
    let batch = features.ncols() / len;
    let mut out = Array2::zeros((batch, channels * len));
    for b in 0..batch {
        for c in 0..channels {
            out.slice_mut(s![b, c * len..(c + 1) * len])
                .assign(&features.slice(s![c, b * len..(b + 1) * len]));
        }
    }
    out
}

/// Inverse of [`flatten_features`].
pub fn unflatten_features(flat: &Array2<f64>, channels: usize, len: usize) -> Array2<f64> {
    let batch = flat.nrows();
    let mut out = Array2::zeros((channels, batch * len));
    for b in 0..batch {
        for c in 0..channels {
            out.slice_mut(s![c, b * len..(b + 1) * len])
                .assign(&flat.slice(s![b, c * len..(c + 1) * len]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let arch = ArchConfig::default();
        let a = init_params(&arch, 11, 24, 5);
        let b = init_params(&arch, 11, 24, 5);
        assert_eq!(a, b);
        let c = init_params(&arch, 11, 24, 6);
        assert_ne!(a.encoder, c.encoder);
        for (name, t) in a
            .encoder
            .tensors()
            .into_iter()
            .chain(a.head.tensors())
            .chain(a.critic.tensors())
        {
            assert!(t.iter().all(|v| v.is_finite()));
            if name.ends_with("bias") {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn first_layer_tracks_station_count() {
        let arch = ArchConfig::default();
        assert_eq!(
            init_params(&arch, 11, 24, 0).encoder.blocks[0].conv.weight.dim(),
            (36, 11, 2)
        );
        assert_eq!(
            init_params(&arch, 7, 24, 0).encoder.blocks[0].conv.weight.dim(),
            (36, 7, 2)
        );
        let joint = ArchConfig {
            variant: Variant::JointEncoder,
            ..ArchConfig::default()
        };
        let m = init_params(&joint, 7, 24, 0);
        assert_eq!(m.encoder.input_channels(), 8);
        assert_eq!(m.head.layers[0].inputs(), 36);
    }

    #[test]
    fn contexts() {
        let arch = ArchConfig::default();
        assert_eq!(arch.receptive_field(), 8);
        assert_eq!(arch.prediction_context(), 12);
    }

    #[test]
    fn flatten_round_trip() {
        let f = Array2::from_shape_fn((3, 2 * 4), |(c, j)| (c * 100 + j) as f64);
        let flat = flatten_features(&f, 4);
        assert_eq!(flat.dim(), (2, 12));
        assert_eq!(flat[[1, 4 + 2]], f[[1, 4 + 2]]);
        assert_eq!(unflatten_features(&flat, 3, 4), f);
    }
}
