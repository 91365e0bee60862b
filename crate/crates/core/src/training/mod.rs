//! Supervised pretraining, adversarial adaptation and persistence.

mod adversarial;
mod batch;
mod checkpoint;
mod config;
mod optim;
mod pretrain;
pub(crate) use pretrain::stream_rng;
mod trace;

pub use adversarial::{
    adapt, critic_loss, critic_loss_and_grads, encode_all, generator_loss, generator_loss_and_grads, gradient_penalty,
    initial_target_encoder, interpolate, AdaptOutcome, Probe,
};
pub use batch::{forecaster_input, history_batch, rainfall_batch, Forecaster, SupervisedStep};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Stage,
};
pub use config::{AdaptConfig, TrainConfig};
pub use optim::{cosine_lr, Optimizer, OptimizerKind};
pub use pretrain::{new_forecaster, pretrain, train_forecaster};
pub use trace::{EpochRecord, TrainTrace};
