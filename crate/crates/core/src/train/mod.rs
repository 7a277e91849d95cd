//! Per-video fitting: loss, Adam, cosine schedule, pruning and QAT.

mod config;
mod fit;
mod loss;
mod optim;
mod prune;

pub use config::TrainConfig;
pub use fit::{
    batch_gradients, fit, fit_store, qat_finetune, run_pipeline, FrameSchedule, LogRecord,
    PipelineOutput, TrainLog,
};
pub use loss::{loss_graph, loss_value, ssim_graph};
pub use optim::{adam_step, cosine_lr, AdamParams, OptimizerState};
pub use prune::prune_global;

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
