//! Low-light grayscale image enhancement with stacked sparse denoising
//! autoencoders.
//!
//! - [`nn`]: dense network engine, losses, gradients and SGD
//! - [`ssda`]: greedy layer-wise pretraining, stacked assembly, finetuning,
//!   single-stage and two-stage models and their file format
//! - [`corpus`]: image I/O, synthetic darkening and noise, training sets
//! - [`reconstruct`]: overlapping-patch inference over whole images
//! - [`metrics`]: PSNR and SSIM
//! - [`baselines`]: histogram equalization, CLAHE and gamma adjustment

pub mod baselines;
pub mod corpus;
pub mod metrics;
pub mod nn;
pub mod reconstruct;
pub mod rng;
pub mod ssda;

mod fsutil;

pub use corpus::Image;
pub use fsutil::write_atomic;
