//! Stacked sparse denoising autoencoders for patch enhancement: greedy
//! layer-wise pretraining, assembly into a mirrored stack, whole-stack
//! finetuning, and the on-disk model format.

mod build;
mod format;
mod model;

use std::path::PathBuf;

use thiserror::Error;

use crate::nn::NnError;

pub use build::{
    assemble, build_llnet, build_sllnet, pretrain_da, DeepTarget, LlnetBuild, SllnetBuild,
    SsdaConfig, TrainPhase,
};
pub use format::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{infer_patch, Model, ModelRole, SsdaModel, StagedModel, TrainingMeta};

#[derive(Debug, Error)]
pub enum SsdaError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model file error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("model file size mismatch at byte {offset}: {declared} parameter bytes declared, {actual} present")]
    SizeMismatch {
        offset: usize,
        declared: usize,
        actual: usize,
    },
    #[error("patch has {actual} values, expected {expected}")]
    PatchLength { expected: usize, actual: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Training {
        context: String,
        #[source]
        source: NnError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}
