//! Whole-image inference with overlapping patches.
//!
//! An image is cut into `side`×`side` windows on a strided grid whose last
//! row/column of origins sits flush with the border, every window is run
//! through a [`PatchModel`], and the outputs are put back by averaging all
//! values that land on the same pixel.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Image;
use crate::nn::NnError;

/// Rows per model call during whole-image inference.
const INFER_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("image is {width}x{height}, smaller than the {side}x{side} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        side: usize,
    },
    #[error("stride ({0}, {1}) must be between 1 and the patch side")]
    InvalidStride(usize, usize),
    #[error("patch at ({row}, {col}) has {actual} values, expected {expected}")]
    PatchSize {
        row: usize,
        col: usize,
        expected: usize,
        actual: usize,
    },
    #[error("patch at ({row}, {col}) extends past the {width}x{height} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },
    #[error("pixel ({row}, {col}) is not covered by any patch")]
    Uncovered { row: usize, col: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Anything that maps flattened square patches to enhanced patches.
pub trait PatchModel: Sync {
    fn patch_side(&self) -> usize;

    /// Maps each row (one flattened patch) to an output row of equal length.
    fn infer_batch(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>, NnError>;
}

/// A flattened square window and the position of its top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Vec<f64>,
    pub row: usize,
    pub col: usize,
}

/// `0, s, 2s, …` up to `len − side`, plus `len − side` itself when the
/// stride does not land on it.
pub fn origins(len: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = len - side;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().expect("at least origin 0") != last {
        out.push(last);
    }
    out
}

pub fn tile(
    img: &Image,
    side: usize,
    stride: (usize, usize),
) -> Result<Vec<Patch>, ReconstructError> {
    let (row_stride, col_stride) = stride;
    if side == 0 || img.width() < side || img.height() < side {
        return Err(ReconstructError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            side,
        });
    }
    // a stride wider than the patch would leave pixels uncovered
    if row_stride == 0 || col_stride == 0 || row_stride > side || col_stride > side {
        return Err(ReconstructError::InvalidStride(row_stride, col_stride));
    }
    let rows = origins(img.height(), side, row_stride);
    let cols = origins(img.width(), side, col_stride);
    let mut patches = Vec::with_capacity(rows.len() * cols.len());
    for &row in &rows {
        for &col in &cols {
            patches.push(Patch {
                values: img.patch(row, col, side),
                row,
                col,
            });
        }
    }
    Ok(patches)
}

/// Per-pixel mean of every patch value covering that pixel. Contributions
/// are accumulated in (row, col) origin order whatever order the patches
/// arrive in, so the result is independent of it.
pub fn reassemble(
    patches: &[Patch],
    width: usize,
    height: usize,
) -> Result<Image, ReconstructError> {
    if width == 0 || height == 0 {
        return Err(ReconstructError::ZeroDimension);
    }
    let mut order: Vec<&Patch> = patches.iter().collect();
    order.sort_by_key(|p| (p.row, p.col));

    let mut sum = vec![0.0f64; width * height];
    let mut count = vec![0u32; width * height];
    for p in order {
        let side = (p.values.len() as f64).sqrt().round() as usize;
        if side * side != p.values.len() || side == 0 {
            return Err(ReconstructError::PatchSize {
                row: p.row,
                col: p.col,
                expected: side * side,
                actual: p.values.len(),
            });
        }
        if p.row + side > height || p.col + side > width {
            return Err(ReconstructError::OutOfBounds {
                row: p.row,
                col: p.col,
                width,
                height,
            });
        }
        for r in 0..side {
            let base = (p.row + r) * width + p.col;
            for c in 0..side {
                sum[base + c] += p.values[r * side + c];
                count[base + c] += 1;
            }
        }
    }
    if let Some(idx) = count.iter().position(|&n| n == 0) {
        return Err(ReconstructError::Uncovered {
            row: idx / width,
            col: idx % width,
        });
    }
    Ok(Image::from_fn(width, height, |r, c| {
        let i = r * width + c;
        sum[i] / count[i] as f64
    }))
}

/// Runs every patch through `model` in fixed-size chunks.
pub fn infer_patches(
    model: &dyn PatchModel,
    patches: &[Patch],
) -> Result<Vec<Patch>, ReconstructError> {
    let side = model.patch_side();
    let dim = side * side;
    if let Some(p) = patches.iter().find(|p| p.values.len() != dim) {
        return Err(ReconstructError::PatchSize {
            row: p.row,
            col: p.col,
            expected: dim,
            actual: p.values.len(),
        });
    }
    let outputs: Vec<Result<Vec<Patch>, ReconstructError>> = patches
        .par_chunks(INFER_CHUNK)
        .map(|chunk| {
            let mut batch = Array2::zeros((chunk.len(), dim));
            for (i, p) in chunk.iter().enumerate() {
                batch.row_mut(i).assign(&ndarray::ArrayView1::from(&p.values));
            }
            let out = model.infer_batch(batch.view())?;
            Ok(chunk
                .iter()
                .zip(out.rows())
                .map(|(p, row)| Patch {
                    values: row.to_vec(),
                    row: p.row,
                    col: p.col,
                })
                .collect())
        })
        .collect();
    let mut result = Vec::with_capacity(patches.len());
    for chunk in outputs {
        result.extend(chunk?);
    }
    Ok(result)
}

/// Tile, enhance every patch, and average the overlaps back together.
pub fn enhance_image(
    model: &dyn PatchModel,
    img: &Image,
    stride: (usize, usize),
) -> Result<Image, ReconstructError> {
    let patches = tile(img, model.patch_side(), stride)?;
    let enhanced = infer_patches(model, &patches)?;
    reassemble(&enhanced, img.width(), img.height())
}

/// Patch diagonal over image diagonal.
pub fn relative_patch_size(
    patch_w: usize,
    patch_h: usize,
    img_w: usize,
    img_h: usize,
) -> Result<f64, ReconstructError> {
    if patch_w == 0 || patch_h == 0 || img_w == 0 || img_h == 0 {
        return Err(ReconstructError::ZeroDimension);
    }
    let diag = |w: usize, h: usize| ((w * w + h * h) as f64).sqrt();
    Ok(diag(patch_w, patch_h) / diag(img_w, img_h))
}
