//! Flat TOML configuration. Every key is optional; missing keys take the
//! defaults below and command-line flags override the file.
//!
//! ```toml
//! images = ["img/a.png", "img/b.pgm"]
//! patches_per_image = 500
//! corruption = "dark_and_noise"   # dark_only | noise_only | none
//! gamma_min = 2.0
//! gamma_max = 5.0
//! sigma_base = 0.09803921568627451
//! patch_side = 17
//!
//! hidden = [867, 578, 289]
//! lambda = 1e-4
//! beta = 0.1
//! rho = 0.05
//! finetune_lambda = 1e-4
//! pretrain = ["30@0.1", "30@0.1", "30@0.01"]
//! finetune = "200@0.1,*@0.01"
//! batch_size = 100
//! stop_rel_improvement = 0.005
//! max_open_epochs = 10000
//! deep_target = "noisy_to_clean" # clean_to_clean
//! validation_metric = "full"     # reconstruction
//!
//! stride = 3
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use llnet::corpus::{CorruptionMode, CorruptionSpec, PATCH_SIDE, SIGMA_BASE};
use llnet::nn::{LossConfig, SgdSchedule, ValidationMetric};
use llnet::ssda::{DeepTarget, SsdaConfig};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub images: Vec<PathBuf>,
    pub patches_per_image: usize,
    pub corruption: String,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub sigma_base: f64,
    pub patch_side: usize,

    pub hidden: Vec<usize>,
    pub lambda: f64,
    pub beta: f64,
    pub rho: f64,
    pub finetune_lambda: Option<f64>,
    pub pretrain: Vec<String>,
    pub finetune: String,
    pub batch_size: usize,
    pub stop_rel_improvement: f64,
    pub max_open_epochs: usize,
    pub deep_target: String,
    pub validation_metric: String,

    pub stride: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        let loss = LossConfig::default();
        let sched = SgdSchedule::default();
        Self {
            images: Vec::new(),
            patches_per_image: 500,
            corruption: CorruptionMode::DarkAndNoise.as_str().into(),
            gamma_min: 2.0,
            gamma_max: 5.0,
            sigma_base: SIGMA_BASE,
            patch_side: PATCH_SIDE,
            hidden: vec![867, 578, 289],
            lambda: loss.lambda,
            beta: loss.beta,
            rho: loss.rho,
            finetune_lambda: None,
            pretrain: vec!["30@0.1".into(), "30@0.1".into(), "30@0.01".into()],
            finetune: "200@0.1,*@0.01".into(),
            batch_size: sched.batch_size,
            stop_rel_improvement: sched.stop_rel_improvement,
            max_open_epochs: sched.max_open_epochs,
            deep_target: DeepTarget::NoisyToClean.as_str().into(),
            validation_metric: "full".into(),
            stride: 3,
            seed: 0,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads `path`; relative image paths are resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for img in &mut cfg.images {
            if img.is_relative() {
                *img = base.join(&*img);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn corruption_spec(&self) -> Result<CorruptionSpec> {
        let spec = CorruptionSpec {
            gamma_range: (self.gamma_min, self.gamma_max),
            sigma_base: self.sigma_base,
            mode: self.corruption.parse()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn schedule(&self, stages: &str) -> Result<SgdSchedule> {
        let schedule = SgdSchedule {
            stages: SgdSchedule::parse_stages(stages)?,
            batch_size: self.batch_size,
            stop_rel_improvement: self.stop_rel_improvement,
            max_open_epochs: self.max_open_epochs,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn ssda_config(&self) -> Result<SsdaConfig> {
        if self.pretrain.len() != self.hidden.len() {
            bail!(
                "{} pretrain schedules given for {} hidden layers",
                self.pretrain.len(),
                self.hidden.len()
            );
        }
        let metric = match self.validation_metric.as_str() {
            "full" => ValidationMetric::Full,
            "reconstruction" => ValidationMetric::Reconstruction,
            other => bail!("unknown validation_metric {other:?} (expected full or reconstruction)"),
        };
        let cfg = SsdaConfig {
            patch_side: self.patch_side,
            hidden: self.hidden.clone(),
            da_loss: LossConfig {
                lambda: self.lambda,
                beta: self.beta,
                rho: self.rho,
            },
            pretrain: self
                .pretrain
                .iter()
                .map(|s| self.schedule(s))
                .collect::<Result<_>>()?,
            finetune: self.schedule(&self.finetune)?,
            finetune_lambda: self.finetune_lambda.unwrap_or(self.lambda),
            deep_target: self.deep_target.parse()?,
            metric,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
