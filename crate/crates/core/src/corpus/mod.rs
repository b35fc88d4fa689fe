//! Images, synthetic corruption and training corpora.

mod corrupt;
mod dataset;
mod image;
mod io;

use std::path::PathBuf;

use thiserror::Error;

pub use corrupt::{
    add_gaussian_noise, gamma_darken, power_law, sample_corruption, Corruption, CorruptionMode,
    CorruptionSpec, SIGMA_BASE,
};
pub use dataset::{
    fingerprint, generate_dataset, pair_matrices, Dataset, PatchSource, TrainingPair,
    DATASET_MAGIC, DATASET_VERSION,
};
pub use image::Image;
pub use io::{
    decode_image, encode_image, load_image, quantize, save_image, to_bytes, ImageFormat,
};

/// Side length of the square patches the networks operate on.
pub const PATCH_SIDE: usize = 17;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed header at byte {offset}: {message}")]
    Header { offset: usize, message: String },
    #[error("truncated data at byte {offset}: expected {expected} bytes, found {actual}")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("PNG error: {0}")]
    Png(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image {image} is {width}x{height}, smaller than the {side}x{side} patch")]
    ImageTooSmall {
        image: usize,
        width: usize,
        height: usize,
        side: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
