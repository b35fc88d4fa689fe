//! Synthetic low-light corruption: power-law darkening followed by additive
//! Gaussian noise.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::image::clamp_unit;
use super::{CorpusError, Image};
use crate::rng::{self, BoxMuller};

/// Noise scale at `B = 1`: a standard deviation of 25 grey levels.
pub const SIGMA_BASE: f64 = 25.0 / 255.0;

/// Which corruptions a training pair receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorruptionMode {
    #[default]
    DarkAndNoise,
    DarkOnly,
    NoiseOnly,
    None,
}

impl CorruptionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionMode::DarkAndNoise => "dark_and_noise",
            CorruptionMode::DarkOnly => "dark_only",
            CorruptionMode::NoiseOnly => "noise_only",
            CorruptionMode::None => "none",
        }
    }
}

impl fmt::Display for CorruptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionMode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dark_and_noise" => Ok(CorruptionMode::DarkAndNoise),
            "dark_only" => Ok(CorruptionMode::DarkOnly),
            "noise_only" => Ok(CorruptionMode::NoiseOnly),
            "none" => Ok(CorruptionMode::None),
            other => Err(CorpusError::InvalidParameter(format!(
                "unknown corruption mode {other:?} (expected dark_and_noise, dark_only, noise_only or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    /// `γ` is drawn uniformly from this closed range.
    pub gamma_range: (f64, f64),
    /// `σ = sqrt(B) · sigma_base` with `B ~ Uniform(0, 1)`.
    pub sigma_base: f64,
    pub mode: CorruptionMode,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            gamma_range: (2.0, 5.0),
            sigma_base: SIGMA_BASE,
            mode: CorruptionMode::DarkAndNoise,
        }
    }
}

impl CorruptionSpec {
    pub fn with_mode(mode: CorruptionMode) -> Self {
        Self {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let (lo, hi) = self.gamma_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CorpusError::InvalidParameter(format!(
                "gamma range ({lo}, {hi}) must satisfy 0 < low <= high"
            )));
        }
        if !(self.sigma_base >= 0.0 && self.sigma_base.is_finite()) {
            return Err(CorpusError::InvalidParameter(format!(
                "sigma_base must be >= 0, got {}",
                self.sigma_base
            )));
        }
        Ok(())
    }
}

/// Parameters drawn for one training pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub gamma: f64,
    pub sigma: f64,
}

/// Draws `(γ, σ)`. Both variates are always consumed from `rng` so the
/// stream layout does not depend on the mode.
pub fn sample_corruption<R: Rng + ?Sized>(spec: &CorruptionSpec, rng: &mut R) -> Corruption {
    let (lo, hi) = spec.gamma_range;
    let gamma = rng.random_range(lo..=hi);
    let b: f64 = rng.random();
    let sigma = b.sqrt() * spec.sigma_base;
    match spec.mode {
        CorruptionMode::DarkAndNoise => Corruption { gamma, sigma },
        CorruptionMode::DarkOnly => Corruption { gamma, sigma: 0.0 },
        CorruptionMode::NoiseOnly => Corruption { gamma: 1.0, sigma },
        CorruptionMode::None => Corruption {
            gamma: 1.0,
            sigma: 0.0,
        },
    }
}

fn check_gamma(gamma: f64) -> Result<(), CorpusError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(())
}

/// `A · v^γ` with `A = peak^(1−γ)`, which keeps `peak` fixed. A zero peak
/// uses `A = 1`.
pub(crate) fn power_law_in_place(values: &mut [f64], gamma: f64, peak: f64) {
    let scale = if peak > 0.0 { peak.powf(1.0 - gamma) } else { 1.0 };
    for v in values {
        *v = clamp_unit(scale * v.powf(gamma));
    }
}

/// Power-law intensity transform that preserves the image's maximum
/// intensity. `γ > 1` darkens, `γ < 1` brightens and `γ = 1` is the identity.
pub fn power_law(img: &Image, gamma: f64) -> Result<Image, CorpusError> {
    check_gamma(gamma)?;
    let mut pixels = img.pixels().to_vec();
    power_law_in_place(&mut pixels, gamma, img.max_value());
    Image::new(img.width(), img.height(), pixels)
}

/// Darkening transform used to synthesize low-light inputs.
pub fn gamma_darken(img: &Image, gamma: f64) -> Result<Image, CorpusError> {
    power_law(img, gamma)
}

pub(crate) fn add_noise_in_place<R: Rng + ?Sized>(
    values: &mut [f64],
    sigma: f64,
    rng: &mut R,
    normal: &mut BoxMuller,
) {
    if sigma == 0.0 {
        return;
    }
    for v in values {
        *v = clamp_unit(*v + sigma * normal.sample(rng));
    }
}

/// Independent zero-mean Gaussian noise of standard deviation `sigma` on
/// every pixel, clamped back into `[0, 1]`.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image, CorpusError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut pixels = img.pixels().to_vec();
    add_noise_in_place(&mut pixels, sigma, &mut rng::seeded(seed), &mut BoxMuller::new());
    Image::new(img.width(), img.height(), pixels)
}
