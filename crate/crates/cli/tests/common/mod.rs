#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;

use llnet::corpus::{save_image, Image};
use llnet::rng::seeded;
use llnet_cli::Config;

/// Smooth background, a few flat shapes and a striped region, stretched to
/// `[0.05, 1]` so every image has peak 1.
pub fn synthetic_image(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = seeded(seed);
    let (w, h) = (width as f64, height as f64);
    let (gx, gy, g0): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..0.6));
    let discs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..6))
        .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h), rng.random_range(0.05..0.3) * w.min(h), rng.random_range(0.0..1.0)))
        .collect();
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            let (x0, y0) = (rng.random_range(0.0..w * 0.8), rng.random_range(0.0..h * 0.8));
            (x0, y0, x0 + rng.random_range(0.1..0.5) * w, y0 + rng.random_range(0.1..0.5) * h, rng.random_range(0.0..1.0))
        })
        .collect();
    let (period, angle, amp): (f64, f64, f64) = (rng.random_range(4.0..16.0), rng.random_range(0.0..std::f64::consts::PI), rng.random_range(0.05..0.25));
    let (sx0, sy0) = (rng.random_range(0.0..w * 0.5), rng.random_range(0.0..h * 0.5));

    let raw = Image::from_fn(width, height, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let mut v = g0 + 0.3 * (gx * x / w + gy * y / h);
        for &(x0, y0, x1, y1, level) in &rects {
            if x >= x0 && x < x1 && y >= y0 && y < y1 {
                v = 0.5 * v + 0.5 * level;
            }
        }
        for &(cx, cy, rad, level) in &discs {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if d < rad {
                v = level + 0.15 * (1.0 - d / rad);
            }
        }
        if x >= sx0 && x < sx0 + w * 0.4 && y >= sy0 && y < sy0 + h * 0.4 {
            let t = (x * angle.cos() + y * angle.sin()) * std::f64::consts::TAU / period;
            v += amp * t.sin();
        }
        v
    });
    // values are unclamped here; stretch them into range
    let lo = raw.pixels().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.pixels().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.map(|v| 0.05 + 0.95 * (v - lo) / (hi - lo))
}

pub fn write_images(dir: &Path, count: usize, first_seed: u64, width: usize, height: usize) -> Vec<PathBuf> {
    (0..count)
        .map(|i| {
            let path = dir.join(format!("img{i:03}.png"));
            save_image(&synthetic_image(first_seed + i as u64, width, height), &path).unwrap();
            path
        })
        .collect()
}

/// A small network for fast tests.
pub fn tiny_config(images: Vec<PathBuf>) -> Config {
    Config {
        images,
        patches_per_image: 40,
        patch_side: 5,
        hidden: vec![12, 8],
        pretrain: vec!["3@0.5".into(), "3@0.5".into()],
        finetune: "10@0.5".into(),
        batch_size: 20,
        seed: 1,
        ..Config::default()
    }
}
