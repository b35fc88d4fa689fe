//! Training-pair generation and the on-disk dataset cache.
//!
//! Cache layout (all integers and floats little-endian):
//!
//! ```text
//! "LLDS"  u32 version  u64 pair_count  u32 patch_side
//! pair_count × { f64 clean[side²]  f64 corrupted[side²]  f64 gamma  f64 sigma }
//! ```
//!
//! The first `ceil(pair_count / 2)` pairs form the training split and the
//! rest the validation split.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::corrupt::{add_noise_in_place, power_law_in_place, sample_corruption, CorruptionSpec};
use super::{CorpusError, Image};
use crate::fsutil::write_atomic;
use crate::rng::{self, BoxMuller};

pub const DATASET_MAGIC: &[u8; 4] = b"LLDS";
pub const DATASET_VERSION: u32 = 1;

/// Where a patch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSource {
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub corrupted: Vec<f64>,
    pub clean: Vec<f64>,
    pub gamma: f64,
    pub sigma: f64,
    /// Not persisted in the cache file.
    pub source: Option<PatchSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patch_side: usize,
    pub train: Vec<TrainingPair>,
    pub valid: Vec<TrainingPair>,
}

/// Row-major `(inputs, targets)` matrices of a set of pairs.
pub fn pair_matrices(pairs: &[TrainingPair], patch_side: usize) -> (Array2<f64>, Array2<f64>) {
    let dim = patch_side * patch_side;
    let mut inputs = Array2::zeros((pairs.len(), dim));
    let mut targets = Array2::zeros((pairs.len(), dim));
    for (i, pair) in pairs.iter().enumerate() {
        inputs
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&pair.corrupted));
        targets.row_mut(i).assign(&ndarray::ArrayView1::from(&pair.clean));
    }
    (inputs, targets)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn train_matrices(&self) -> (Array2<f64>, Array2<f64>) {
        pair_matrices(&self.train, self.patch_side)
    }

    pub fn valid_matrices(&self) -> (Array2<f64>, Array2<f64>) {
        pair_matrices(&self.valid, self.patch_side)
    }

    pub fn encode(&self) -> Vec<u8> {
        let dim = self.patch_side * self.patch_side;
        let mut out = Vec::with_capacity(20 + self.len() * (2 * dim + 2) * 8);
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.patch_side as u32).to_le_bytes());
        for pair in self.train.iter().chain(&self.valid) {
            for v in pair.clean.iter().chain(&pair.corrupted) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&pair.gamma.to_le_bytes());
            out.extend_from_slice(&pair.sigma.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != DATASET_MAGIC {
            return Err(CorpusError::Header {
                offset: 0,
                message: "missing LLDS magic".into(),
            });
        }
        let version_at = cur.pos;
        let version = cur.u32()?;
        if version != DATASET_VERSION {
            return Err(CorpusError::Header {
                offset: version_at,
                message: format!("unsupported dataset version {version}"),
            });
        }
        let count_at = cur.pos;
        let count = usize::try_from(cur.u64()?).map_err(|_| CorpusError::Header {
            offset: count_at,
            message: "pair count too large".into(),
        })?;
        let side_at = cur.pos;
        let patch_side = cur.u32()? as usize;
        if patch_side == 0 {
            return Err(CorpusError::Header {
                offset: side_at,
                message: "patch side must be positive".into(),
            });
        }
        let dim = patch_side * patch_side;
        let record = (2 * dim + 2) * 8;
        let expected = count.checked_mul(record).ok_or_else(|| CorpusError::Header {
            offset: count_at,
            message: "pair count too large".into(),
        })?;
        if cur.remaining() != expected {
            if cur.remaining() < expected {
                return Err(CorpusError::Truncated {
                    offset: bytes.len(),
                    expected,
                    actual: cur.remaining(),
                });
            }
            return Err(CorpusError::Header {
                offset: cur.pos + expected,
                message: format!("{} trailing bytes after the last pair", cur.remaining() - expected),
            });
        }
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let clean = cur.f64s(dim)?;
            let corrupted = cur.f64s(dim)?;
            let gamma = cur.f64()?;
            let sigma = cur.f64()?;
            pairs.push(TrainingPair {
                corrupted,
                clean,
                gamma,
                sigma,
                source: None,
            });
        }
        let valid = pairs.split_off(train_count(count));
        Ok(Dataset {
            patch_side,
            train: pairs,
            valid,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        write_atomic(path, &self.encode()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&bytes)
    }
}

fn train_count(total: usize) -> usize {
    total.div_ceil(2)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        if self.remaining() < n {
            return Err(CorpusError::Truncated {
                offset: self.bytes.len(),
                expected: n,
                actual: self.remaining(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CorpusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CorpusError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CorpusError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Cuts `patches_per_image` random windows from every image, corrupts each
/// with freshly drawn `(γ, σ)`, shuffles everything and splits it in half.
///
/// Image `i` draws from ChaCha stream `i` of `seed` and the final shuffle from
/// stream `u64::MAX`, so the result does not depend on the thread count.
/// Darkening keeps the source image's peak intensity fixed (`A = m^(1−γ)` with
/// `m` the image maximum), which matches darkening the whole image first.
pub fn generate_dataset(
    images: &[Image],
    patches_per_image: usize,
    patch_side: usize,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    spec.validate()?;
    if patch_side == 0 {
        return Err(CorpusError::InvalidParameter("patch side must be positive".into()));
    }
    for (i, img) in images.iter().enumerate() {
        if img.width() < patch_side || img.height() < patch_side {
            return Err(CorpusError::ImageTooSmall {
                image: i,
                width: img.width(),
                height: img.height(),
                side: patch_side,
            });
        }
    }
    let per_image: Vec<Vec<TrainingPair>> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| patches_from_image(i, img, patches_per_image, patch_side, spec, seed))
        .collect();
    let mut pairs: Vec<TrainingPair> = per_image.into_iter().flatten().collect();
    pairs.shuffle(&mut rng::seeded_stream(seed, u64::MAX));
    let valid = pairs.split_off(train_count(pairs.len()));
    Ok(Dataset {
        patch_side,
        train: pairs,
        valid,
    })
}

fn patches_from_image(
    index: usize,
    img: &Image,
    count: usize,
    side: usize,
    spec: &CorruptionSpec,
    seed: u64,
) -> Vec<TrainingPair> {
    let mut rng = rng::seeded_stream(seed, index as u64);
    let mut normal = BoxMuller::new();
    let peak = img.max_value();
    (0..count)
        .map(|_| {
            let row = rng.random_range(0..=img.height() - side);
            let col = rng.random_range(0..=img.width() - side);
            let corruption = sample_corruption(spec, &mut rng);
            let clean = img.patch(row, col, side);
            let mut corrupted = clean.clone();
            if corruption.gamma != 1.0 {
                power_law_in_place(&mut corrupted, corruption.gamma, peak);
            }
            add_noise_in_place(&mut corrupted, corruption.sigma, &mut rng, &mut normal);
            TrainingPair {
                corrupted,
                clean,
                gamma: corruption.gamma,
                sigma: corruption.sigma,
                source: Some(PatchSource {
                    image: index,
                    row,
                    col,
                }),
            }
        })
        .collect()
}

/// 64-bit FNV-1a digest, used to tag models with the corpus they saw.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
