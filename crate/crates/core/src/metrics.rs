//! Full-reference image quality: PSNR and SSIM.
//!
//! SSIM uses the usual constants `C1 = (0.01·L)²`, `C2 = (0.03·L)²` with
//! `L = 1`, an 11×11 Gaussian window (σ = 1.5, weights summing to one) and
//! averages the local index over every window position that fits entirely
//! inside the image.

use thiserror::Error;

use crate::corpus::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image is {0}x{1}, smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
}

fn same_size(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64, MetricError> {
    same_size(reference, test)?;
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.pixels().len() as f64)
}

/// `10·log10(peak² / MSE)` in dB; identical images give `+∞`.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(reference, test)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Local SSIM index from window statistics.
pub fn ssim_index(mu_x: f64, mu_y: f64, var_x: f64, var_y: f64, cov: f64) -> f64 {
    ((2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2))
}

/// Valid-mode separable Gaussian filtering of `f(x, y)` over both images.
fn filtered(
    a: &Image,
    b: &Image,
    taps: &[f64; SSIM_WINDOW],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let (w, h) = (a.width(), a.height());
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * f(a.get(r, c + k), b.get(r, c + k));
            }
            rows[r * ow + c] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(r + k) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Mean SSIM over all valid window positions.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64, MetricError> {
    same_size(reference, test)?;
    if reference.width() < SSIM_WINDOW || reference.height() < SSIM_WINDOW {
        return Err(MetricError::TooSmall(reference.width(), reference.height()));
    }
    let taps = gaussian_taps();
    let mu_x = filtered(reference, test, &taps, |x, _| x);
    let mu_y = filtered(reference, test, &taps, |_, y| y);
    let xx = filtered(reference, test, &taps, |x, _| x * x);
    let yy = filtered(reference, test, &taps, |_, y| y * y);
    let xy = filtered(reference, test, &taps, |x, y| x * y);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            ssim_index(mx, my, xx[i] - mx * mx, yy[i] - my * my, xy[i] - mx * my)
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, k: usize) -> Image {
        Image::from_fn(w, h, |r, c| ((r * 7 + c * 13 + k * 5) % 17) as f64 / 16.0)
    }

    #[test]
    fn psnr_conventions() {
        let a = pattern(8, 8, 0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let zero = Image::filled(4, 4, 0.0);
        let one = Image::filled(4, 4, 1.0);
        assert_eq!(psnr(&zero, &one, 1.0).unwrap(), 0.0);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert!(matches!(psnr(&zero, &pattern(5, 4, 0), 1.0), Err(MetricError::DimensionMismatch(..))));
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let a = pattern(23, 19, 1);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_constant_images() {
        // σ terms vanish: (2c(c+d) + C1) C2 / ((c² + (c+d)² + C1) C2)
        let (c, d) = (0.05, 0.9);
        let a = Image::filled(16, 16, c);
        let b = Image::filled(16, 16, c + d);
        let expected = (2.0 * c * (c + d) + SSIM_C1) / (c * c + (c + d) * (c + d) + SSIM_C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!(got > 0.0 && got < 0.2);
    }

    #[test]
    fn ssim_symmetric_and_mirror_invariant() {
        let a = pattern(20, 14, 2);
        let b = pattern(20, 14, 9);
        let ab = ssim(&a, &b).unwrap();
        assert_eq!(ab, ssim(&b, &a).unwrap());
        let mirrored = ssim(&a.mirrored_horizontally(), &b.mirrored_horizontally()).unwrap();
        assert!((ab - mirrored).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::filled(10, 30, 0.5);
        assert_eq!(ssim(&a, &a), Err(MetricError::TooSmall(10, 30)));
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(t[i], t[SSIM_WINDOW - 1 - i]);
        }
    }
}
