use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, CowArray, Ix2};

use super::model::{ModelRole, SsdaModel, StagedModel, TrainingMeta};
use super::SsdaError;
use crate::corpus::PATCH_SIDE;
use crate::nn::{
    sgd_train, Activation, DenseLayer, EpochRecord, LossConfig, Network, NnError, Objective,
    Pairs, SgdSchedule, Stage, TrainHistory, ValidationMetric,
};
use crate::rng;

/// Training pairs for autoencoders above the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeepTarget {
    /// Encoded corrupted input, encoded clean target.
    #[default]
    NoisyToClean,
    /// Encoded clean data on both sides.
    CleanToClean,
}

impl DeepTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            DeepTarget::NoisyToClean => "noisy_to_clean",
            DeepTarget::CleanToClean => "clean_to_clean",
        }
    }
}

impl FromStr for DeepTarget {
    type Err = SsdaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noisy_to_clean" => Ok(DeepTarget::NoisyToClean),
            "clean_to_clean" => Ok(DeepTarget::CleanToClean),
            other => Err(SsdaError::Invalid(format!(
                "unknown deep target {other:?}, expected noisy_to_clean or clean_to_clean"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdaConfig {
    pub patch_side: usize,
    /// Encoder widths from the input side inwards.
    pub hidden: Vec<usize>,
    pub da_loss: LossConfig,
    /// One schedule per autoencoder.
    pub pretrain: Vec<SgdSchedule>,
    pub finetune: SgdSchedule,
    pub finetune_lambda: f64,
    pub deep_target: DeepTarget,
    pub metric: ValidationMetric,
}

impl Default for SsdaConfig {
    fn default() -> Self {
        let stage = |epochs, learning_rate| Stage {
            epochs,
            learning_rate,
        };
        let schedule = |stages| SgdSchedule {
            stages,
            ..Default::default()
        };
        Self {
            patch_side: PATCH_SIDE,
            hidden: vec![867, 578, 289],
            da_loss: LossConfig::default(),
            pretrain: vec![
                schedule(vec![stage(Some(30), 0.1)]),
                schedule(vec![stage(Some(30), 0.1)]),
                schedule(vec![stage(Some(30), 0.01)]),
            ],
            finetune: schedule(vec![stage(Some(200), 0.1), stage(None, 0.01)]),
            finetune_lambda: LossConfig::default().lambda,
            deep_target: DeepTarget::NoisyToClean,
            metric: ValidationMetric::Full,
        }
    }
}

impl SsdaConfig {
    pub fn validate(&self) -> Result<(), SsdaError> {
        if self.patch_side == 0 {
            return Err(SsdaError::Architecture("patch side must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(SsdaError::Architecture(format!(
                "hidden widths must be nonempty and positive, got {:?}",
                self.hidden
            )));
        }
        if self.pretrain.len() != self.hidden.len() {
            return Err(SsdaError::Invalid(format!(
                "{} pretraining schedules for {} hidden layers",
                self.pretrain.len(),
                self.hidden.len()
            )));
        }
        self.da_loss.validate()?;
        for s in self.pretrain.iter().chain(std::iter::once(&self.finetune)) {
            s.validate()?;
        }
        if !(self.finetune_lambda >= 0.0 && self.finetune_lambda.is_finite()) {
            return Err(SsdaError::Invalid(format!(
                "finetune lambda must be >= 0, got {}",
                self.finetune_lambda
            )));
        }
        Ok(())
    }

    /// `key=value` summary stored in model files.
    pub fn notes(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let pretrain: Vec<String> = self.pretrain.iter().map(SgdSchedule::stages_string).collect();
        format!(
            "hidden={}\nlambda={}\nbeta={}\nrho={}\npretrain={}\nfinetune={}\nfinetune_lambda={}\nbatch_size={}\ndeep_target={}\n",
            hidden.join(","),
            self.da_loss.lambda,
            self.da_loss.beta,
            self.da_loss.rho,
            pretrain.join(";"),
            self.finetune.stages_string(),
            self.finetune_lambda,
            self.finetune.batch_size,
            self.deep_target.as_str(),
        )
    }
}

/// Which part of training an epoch record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainPhase {
    /// `layer` counts from 1.
    Pretrain { role: ModelRole, layer: usize },
    Finetune { role: ModelRole },
}

impl fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (role, rest) = match *self {
            TrainPhase::Pretrain { role, layer } => (role, format!("pretrain{layer}")),
            TrainPhase::Finetune { role } => (role, "finetune".to_string()),
        };
        match role {
            ModelRole::Integrated => write!(f, "{rest}"),
            other => write!(f, "{}_{rest}", other.name()),
        }
    }
}

/// Trains one sparse denoising autoencoder from Glorot-initialized weights.
/// Returns the encoder, decoder and training history.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_da(
    train: Pairs<'_>,
    valid: Pairs<'_>,
    hidden: usize,
    loss: LossConfig,
    schedule: &SgdSchedule,
    metric: ValidationMetric,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(DenseLayer, DenseLayer, TrainHistory), NnError> {
    let dim = train.inputs.ncols();
    let mut init = rng::seeded_stream(seed, 1);
    let enc = DenseLayer::glorot(dim, hidden, Activation::Sigmoid, &mut init);
    let dec = DenseLayer::glorot(hidden, dim, Activation::Sigmoid, &mut init);
    let mut net = Network::new(vec![enc, dec])?;
    let history = sgd_train(
        &mut net,
        train,
        valid,
        &Objective::Da(loss),
        schedule,
        metric,
        seed,
        observer,
    )?;
    let mut layers = net.into_layers();
    let dec = layers.pop().expect("two layers");
    let enc = layers.pop().expect("two layers");
    Ok((enc, dec, history))
}

/// Encoders followed by their transposes in reverse order, decoder biases
/// zero.
pub fn assemble(encoders: &[DenseLayer]) -> Result<Network, NnError> {
    let mut layers: Vec<DenseLayer> = encoders.to_vec();
    layers.extend(
        encoders
            .iter()
            .rev()
            .map(|e| e.transposed(Activation::Sigmoid)),
    );
    Network::new(layers)
}

#[derive(Debug, Clone)]
pub struct LlnetBuild {
    pub model: SsdaModel,
    pub pretrain: Vec<TrainHistory>,
    pub finetune: TrainHistory,
}

/// Greedy layer-wise pretraining, assembly and finetuning of one stack.
///
/// The autoencoder at depth `k` is seeded from `meta.seed + k`; finetuning
/// shuffles with `meta.seed + 1000`.
pub fn build_llnet(
    train: Pairs<'_>,
    valid: Pairs<'_>,
    config: &SsdaConfig,
    role: ModelRole,
    meta: TrainingMeta,
    observer: &mut dyn FnMut(&TrainPhase, &EpochRecord),
) -> Result<LlnetBuild, SsdaError> {
    config.validate()?;
    let dim = config.patch_side * config.patch_side;
    for (name, ins, outs) in [
        ("training", train.inputs.ncols(), train.targets.ncols()),
        ("validation", valid.inputs.ncols(), valid.targets.ncols()),
    ] {
        if ins != dim || outs != dim {
            return Err(SsdaError::Architecture(format!(
                "{name} pairs have {ins} -> {outs} values per patch, expected {dim}"
            )));
        }
    }
    let seed = meta.seed;

    type Rep<'a> = CowArray<'a, f64, Ix2>;
    let (mut tr_in, mut tr_tgt): (Rep<'_>, Rep<'_>) =
        (CowArray::from(train.inputs), CowArray::from(train.targets));
    let (mut va_in, mut va_tgt): (Rep<'_>, Rep<'_>) =
        (CowArray::from(valid.inputs), CowArray::from(valid.targets));

    let mut encoders = Vec::with_capacity(config.hidden.len());
    let mut pretrain = Vec::with_capacity(config.hidden.len());
    for (k, (&hidden, schedule)) in config.hidden.iter().zip(&config.pretrain).enumerate() {
        let phase = TrainPhase::Pretrain {
            role,
            layer: k + 1,
        };
        let (enc, _dec, history) = pretrain_da(
            Pairs::new(tr_in.view(), tr_tgt.view())?,
            Pairs::new(va_in.view(), va_tgt.view())?,
            hidden,
            config.da_loss,
            schedule,
            config.metric,
            seed.wrapping_add(k as u64),
            &mut |rec| observer(&phase, rec),
        )
        .map_err(|source| SsdaError::Training {
            context: format!("pretraining autoencoder {}", k + 1),
            source,
        })?;

        if k + 1 < config.hidden.len() {
            let encode = |x: &Rep<'_>| -> Array2<f64> { enc.forward_batch(x.view()) };
            let next_tr_tgt = encode(&tr_tgt);
            let next_va_tgt = encode(&va_tgt);
            let (next_tr_in, next_va_in) = match config.deep_target {
                DeepTarget::NoisyToClean => (encode(&tr_in), encode(&va_in)),
                DeepTarget::CleanToClean => (next_tr_tgt.clone(), next_va_tgt.clone()),
            };
            tr_in = CowArray::from(next_tr_in);
            tr_tgt = CowArray::from(next_tr_tgt);
            va_in = CowArray::from(next_va_in);
            va_tgt = CowArray::from(next_va_tgt);
        }
        encoders.push(enc);
        pretrain.push(history);
    }

    let mut network = assemble(&encoders)?;
    let phase = TrainPhase::Finetune { role };
    let finetune = sgd_train(
        &mut network,
        train,
        valid,
        &Objective::Ssda {
            lambda: config.finetune_lambda,
        },
        &config.finetune,
        config.metric,
        seed.wrapping_add(1000),
        &mut |rec| observer(&phase, rec),
    )
    .map_err(|source| SsdaError::Training {
        context: "finetuning".into(),
        source,
    })?;

    let meta = TrainingMeta {
        notes: if meta.notes.is_empty() {
            config.notes()
        } else {
            meta.notes
        },
        ..meta
    };
    Ok(LlnetBuild {
        model: SsdaModel::new(network, config.patch_side, role, meta)?,
        pretrain,
        finetune,
    })
}

#[derive(Debug, Clone)]
pub struct SllnetBuild {
    pub contrast: LlnetBuild,
    pub denoise: LlnetBuild,
}

impl SllnetBuild {
    pub fn into_model(self) -> StagedModel {
        StagedModel::new(self.contrast.model, self.denoise.model)
            .expect("stages built with matching roles and patch size")
    }
}

/// Two independently trained stacks: one on darkened-only pairs, one on
/// noisy-only pairs. The denoise stage is seeded from `meta.seed + 2^32`.
pub fn build_sllnet(
    dark: (Pairs<'_>, Pairs<'_>),
    noisy: (Pairs<'_>, Pairs<'_>),
    config: &SsdaConfig,
    meta: TrainingMeta,
    observer: &mut dyn FnMut(&TrainPhase, &EpochRecord),
) -> Result<SllnetBuild, SsdaError> {
    let denoise_meta = TrainingMeta {
        seed: meta.seed.wrapping_add(1 << 32),
        ..meta.clone()
    };
    let contrast = build_llnet(dark.0, dark.1, config, ModelRole::ContrastStage, meta, observer)?;
    let denoise = build_llnet(
        noisy.0,
        noisy.1,
        config,
        ModelRole::DenoiseStage,
        denoise_meta,
        observer,
    )?;
    Ok(SllnetBuild { contrast, denoise })
}
