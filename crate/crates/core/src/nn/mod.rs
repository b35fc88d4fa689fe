//! Minimal dense feed-forward engine: forward pass, sparse-autoencoder and
//! stacked finetuning losses, back-propagated gradients and mini-batch SGD.
//!
//! Everything runs in `f64`. Batched routines take one example per row.

mod layer;
mod loss;
mod train;

use thiserror::Error;

pub use layer::{sigmoid, Activation, DenseLayer, Network};
pub use loss::{
    da_loss, evaluate, gradients, kl_divergence, ssda_loss, Gradients, LossBreakdown, LossConfig,
    Objective, ValidationMetric, RHO_HAT_EPS,
};
pub use train::{sgd_train, EpochRecord, Pairs, SgdSchedule, Stage, TrainHistory};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected input of length {expected}, got {actual}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer}: previous layer emits {expected} values but this layer takes {actual}")]
    IncompatibleLayers {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("bias length {biases} does not match weight row count {rows}")]
    BiasMismatch { rows: usize, biases: usize },
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("expected {expected} layers, network has {actual}")]
    LayerCount {
        expected: &'static str,
        actual: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch has {inputs} inputs but {targets} targets")]
    BatchMismatch { inputs: usize, targets: usize },
    #[error("{name} = {value} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("parameters contain NaN or infinity")]
    NonFiniteParameters,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}{}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    Diverged { epoch: usize, batch: Option<usize> },
}
