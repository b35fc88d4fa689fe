//! Classical enhancement baselines: global histogram equalization, CLAHE and
//! gamma adjustment.
//!
//! Both equalizers quantize intensities to `bins` levels with
//! `level = round(v · (bins − 1))` and remap a level through
//!
//! ```text
//! (CDF(level) − CDF_min) / (1 − CDF_min)
//! ```
//!
//! where `CDF` is the normalized cumulative histogram and `CDF_min` its
//! smallest nonzero value. A histogram with a single occupied level maps
//! that level to 0.

use thiserror::Error;

use crate::corpus::{self, CorpusError, Image};

pub const CLAHE_MAX_ROUNDS: usize = 100;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least 2 histogram bins, got {0}")]
    TooFewBins(usize),
    #[error("invalid tile grid {tiles_x}x{tiles_y} for a {width}x{height} image")]
    InvalidTiles {
        tiles_x: usize,
        tiles_y: usize,
        width: usize,
        height: usize,
    },
    #[error("clip limit must be positive, got {0}")]
    InvalidClipLimit(f64),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[inline]
fn level(v: f64, bins: usize) -> usize {
    ((v * (bins - 1) as f64).round() as usize).min(bins - 1)
}

/// Equalization lookup table from a (possibly fractional) histogram.
pub fn equalization_map(hist: &[f64]) -> Vec<f64> {
    let total: f64 = hist.iter().sum();
    let mut cdf = Vec::with_capacity(hist.len());
    let mut running = 0.0;
    for &h in hist {
        running += h;
        cdf.push(running / total);
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0.0).unwrap_or(0.0);
    let span = 1.0 - cdf_min;
    cdf.iter()
        .map(|&c| {
            if span <= 0.0 {
                0.0
            } else {
                ((c - cdf_min) / span).clamp(0.0, 1.0)
            }
        })
        .collect()
}

fn histogram(img: &Image, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    for &v in img.pixels() {
        hist[level(v, bins)] += 1.0;
    }
    hist
}

pub fn hist_equalize(img: &Image, bins: usize) -> Result<Image, BaselineError> {
    if bins < 2 {
        return Err(BaselineError::TooFewBins(bins));
    }
    let map = equalization_map(&histogram(img, bins));
    Ok(img.map(|v| map[level(v, bins)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    /// Tile grid as (columns, rows).
    pub tiles: (usize, usize),
    /// Per-bin ceiling as a fraction of the tile's pixel count.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles: (8, 8),
            clip_limit: 0.01,
            bins: 256,
        }
    }
}

/// Clips `hist` at `ceiling` and spreads the excess evenly over all bins,
/// repeating until nothing exceeds the ceiling or `CLAHE_MAX_ROUNDS` rounds
/// have run.
pub fn clip_histogram(hist: &mut [f64], ceiling: f64) {
    for _ in 0..CLAHE_MAX_ROUNDS {
        let mut excess = 0.0;
        for h in hist.iter_mut() {
            if *h > ceiling {
                excess += *h - ceiling;
                *h = ceiling;
            }
        }
        if excess <= 1e-12 {
            return;
        }
        let share = excess / hist.len() as f64;
        hist.iter_mut().for_each(|h| *h += share);
    }
}

/// Bounds of tile `i` of `n` along an axis of length `len`.
fn tile_span(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

/// Contrast-limited adaptive histogram equalization.
///
/// Every tile gets its own clipped equalization map; a pixel's output blends
/// the maps of the four nearest tile centers bilinearly. Outside the outer
/// ring of centers the nearest tile's map is used on that axis.
pub fn clahe(img: &Image, params: &ClaheParams) -> Result<Image, BaselineError> {
    let ClaheParams {
        tiles: (tiles_x, tiles_y),
        clip_limit,
        bins,
    } = *params;
    if bins < 2 {
        return Err(BaselineError::TooFewBins(bins));
    }
    if !(clip_limit > 0.0) {
        return Err(BaselineError::InvalidClipLimit(clip_limit));
    }
    let (w, h) = (img.width(), img.height());
    if tiles_x == 0 || tiles_y == 0 || tiles_x > w || tiles_y > h {
        return Err(BaselineError::InvalidTiles {
            tiles_x,
            tiles_y,
            width: w,
            height: h,
        });
    }

    let mut maps = Vec::with_capacity(tiles_x * tiles_y);
    for ty in 0..tiles_y {
        let (r0, r1) = tile_span(ty, tiles_y, h);
        for tx in 0..tiles_x {
            let (c0, c1) = tile_span(tx, tiles_x, w);
            let mut hist = vec![0.0; bins];
            for r in r0..r1 {
                for c in c0..c1 {
                    hist[level(img.get(r, c), bins)] += 1.0;
                }
            }
            let area = ((r1 - r0) * (c1 - c0)) as f64;
            // a ceiling below the mean bin height cannot be met
            let ceiling = (clip_limit * area).max(area / bins as f64);
            clip_histogram(&mut hist, ceiling);
            maps.push(equalization_map(&hist));
        }
    }

    let centers = |n: usize, len: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (a, b) = tile_span(i, n, len);
                (a + b - 1) as f64 / 2.0
            })
            .collect()
    };
    let cx = centers(tiles_x, w);
    let cy = centers(tiles_y, h);
    // (lower tile, upper tile, weight of upper)
    let locate = |pos: f64, cs: &[f64]| -> (usize, usize, f64) {
        if pos <= cs[0] {
            return (0, 0, 0.0);
        }
        let last = cs.len() - 1;
        if pos >= cs[last] {
            return (last, last, 0.0);
        }
        let i = cs.partition_point(|&c| c <= pos) - 1;
        (i, i + 1, (pos - cs[i]) / (cs[i + 1] - cs[i]))
    };

    Ok(Image::from_fn(w, h, |r, c| {
        let lv = level(img.get(r, c), bins);
        let (y0, y1, fy) = locate(r as f64, &cy);
        let (x0, x1, fx) = locate(c as f64, &cx);
        let m = |ty: usize, tx: usize| maps[ty * tiles_x + tx][lv];
        let top = m(y0, x0) * (1.0 - fx) + m(y0, x1) * fx;
        let bottom = m(y1, x0) * (1.0 - fx) + m(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

/// Max-preserving power law; `γ < 1` brightens.
pub fn gamma_adjust(img: &Image, gamma: f64) -> Result<Image, BaselineError> {
    Ok(corpus::power_law(img, gamma)?)
}
