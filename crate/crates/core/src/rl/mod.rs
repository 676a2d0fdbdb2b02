//! Lagrangian SAC-Discrete: replay, losses, the learner and the training loop.

mod agent;
mod buffer;
pub mod losses;
mod trainer;

pub use agent::{argmax, sample_index, Agent, SacConfig, UpdateStats};
pub use buffer::{aggregate_window, Batch, ReplayBuffer, StoredTransition, Transition};
pub use losses::{
    cost_critic_loss, critic_loss, lambda_loss, lambda_update, n_step_targets, one_step_target,
    policy_loss_lagrangian, soft_state_value, temperature_loss,
};
pub use trainer::{
    metrics_from_csv, metrics_to_csv, train, variant_pipeline, EpisodeMetrics, Snapshot, TrainConfig, Trainer,
    Variant, CHECKPOINT_VERSION,
};

use crate::nn::NnError;
use crate::pipeline::PipelineError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("non-finite loss at update {update}: {stats}")]
    NonFinite { update: u64, stats: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(String),
}
