use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::SsdaError;
use crate::nn::{Network, NnError};
use crate::reconstruct::PatchModel;

/// What a stacked autoencoder was trained to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    /// Joint brightening and denoising in one network.
    Integrated,
    /// First stage of a two-stage model, trained on darkened-only pairs.
    ContrastStage,
    /// Second stage of a two-stage model, trained on noisy-only pairs.
    DenoiseStage,
}

impl ModelRole {
    pub(crate) fn tag(self) -> u8 {
        match self {
            ModelRole::Integrated => 0,
            ModelRole::ContrastStage => 1,
            ModelRole::DenoiseStage => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelRole::Integrated),
            1 => Some(ModelRole::ContrastStage),
            2 => Some(ModelRole::DenoiseStage),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelRole::Integrated => "integrated",
            ModelRole::ContrastStage => "contrast",
            ModelRole::DenoiseStage => "denoise",
        }
    }
}

/// Provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub corpus_fingerprint: u64,
    /// Free-form `key=value` lines (schedules, loss settings).
    pub notes: String,
}

/// A stacked autoencoder of `2L` layers mapping flattened
/// `patch_side`×`patch_side` patches to patches of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdaModel {
    network: Network,
    patch_side: usize,
    role: ModelRole,
    pub meta: TrainingMeta,
}

impl SsdaModel {
    pub fn new(
        network: Network,
        patch_side: usize,
        role: ModelRole,
        meta: TrainingMeta,
    ) -> Result<Self, SsdaError> {
        check_architecture(&network, patch_side)?;
        Ok(Self {
            network,
            patch_side,
            role,
            meta,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn role(&self) -> ModelRole {
        self.role
    }

    pub fn with_role(mut self, role: ModelRole) -> Self {
        self.role = role;
        self
    }

    /// Hidden widths of the encoder half, e.g. `[867, 578, 289]`.
    pub fn encoder_dims(&self) -> Vec<usize> {
        let layers = self.network.layers();
        layers[..layers.len() / 2].iter().map(|l| l.out_dim()).collect()
    }
}

/// Layer count must be even, dims must mirror around the middle and both
/// ends must match the patch size.
pub(crate) fn check_architecture(net: &Network, patch_side: usize) -> Result<(), SsdaError> {
    let layers = net.layers();
    let dim = patch_side * patch_side;
    if patch_side == 0 {
        return Err(SsdaError::Architecture("patch side must be positive".into()));
    }
    if layers.len() % 2 != 0 {
        return Err(SsdaError::Architecture(format!(
            "a stacked autoencoder needs an even number of layers, got {}",
            layers.len()
        )));
    }
    if net.in_dim() != dim || net.out_dim() != dim {
        return Err(SsdaError::Architecture(format!(
            "network maps {} -> {} but {patch_side}x{patch_side} patches need {dim} -> {dim}",
            net.in_dim(),
            net.out_dim()
        )));
    }
    let n = layers.len();
    for k in 0..n / 2 {
        let (enc, dec) = (&layers[k], &layers[n - 1 - k]);
        if enc.in_dim() != dec.out_dim() || enc.out_dim() != dec.in_dim() {
            return Err(SsdaError::Architecture(format!(
                "layer {k} ({} -> {}) is not mirrored by layer {} ({} -> {})",
                enc.in_dim(),
                enc.out_dim(),
                n - 1 - k,
                dec.in_dim(),
                dec.out_dim()
            )));
        }
    }
    Ok(())
}

impl PatchModel for SsdaModel {
    fn patch_side(&self) -> usize {
        self.patch_side
    }

    fn infer_batch(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.network.predict_batch(patches)
    }
}

/// Contrast stage followed by a denoising stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedModel {
    contrast: SsdaModel,
    denoise: SsdaModel,
}

impl StagedModel {
    pub fn new(contrast: SsdaModel, denoise: SsdaModel) -> Result<Self, SsdaError> {
        if contrast.patch_side != denoise.patch_side {
            return Err(SsdaError::Architecture(format!(
                "stages disagree on patch side: {} vs {}",
                contrast.patch_side, denoise.patch_side
            )));
        }
        if contrast.role != ModelRole::ContrastStage || denoise.role != ModelRole::DenoiseStage {
            return Err(SsdaError::Architecture(format!(
                "stage roles must be contrast then denoise, got {} then {}",
                contrast.role.name(),
                denoise.role.name()
            )));
        }
        Ok(Self { contrast, denoise })
    }

    pub fn contrast(&self) -> &SsdaModel {
        &self.contrast
    }

    pub fn denoise(&self) -> &SsdaModel {
        &self.denoise
    }
}

impl PatchModel for StagedModel {
    fn patch_side(&self) -> usize {
        self.contrast.patch_side
    }

    fn infer_batch(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let brightened = self.contrast.infer_batch(patches)?;
        self.denoise.infer_batch(brightened.view())
    }
}

/// Either kind of trained model, as stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Single(SsdaModel),
    Staged(StagedModel),
}

impl Model {
    /// The model whose first layer sees raw input patches.
    pub fn first_stage(&self) -> &SsdaModel {
        match self {
            Model::Single(m) => m,
            Model::Staged(s) => &s.contrast,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Single(_) => "llnet",
            Model::Staged(_) => "sllnet",
        }
    }
}

impl PatchModel for Model {
    fn patch_side(&self) -> usize {
        self.first_stage().patch_side
    }

    fn infer_batch(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        match self {
            Model::Single(m) => m.infer_batch(patches),
            Model::Staged(s) => s.infer_batch(patches),
        }
    }
}

/// Enhances a single flattened patch.
pub fn infer_patch(model: &dyn PatchModel, patch: &[f64]) -> Result<Vec<f64>, SsdaError> {
    let dim = model.patch_side() * model.patch_side();
    if patch.len() != dim {
        return Err(SsdaError::PatchLength {
            expected: dim,
            actual: patch.len(),
        });
    }
    let batch = ArrayView1::from(patch).insert_axis(Axis(0));
    Ok(model.infer_batch(batch)?.row(0).to_vec())
}
