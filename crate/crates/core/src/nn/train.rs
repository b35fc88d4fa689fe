//! Mini-batch stochastic gradient descent with staged learning rates and a
//! validation-based stopping rule.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::loss::{evaluate_layers, gradients_layers, Objective, ValidationMetric};
use super::{Network, NnError};
use crate::rng;

/// One block of epochs at a fixed learning rate. `epochs: None` marks an
/// open-ended stage that runs until the stopping rule fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub epochs: Option<usize>,
    pub learning_rate: f64,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.epochs {
            Some(n) => write!(f, "{n}@{}", self.learning_rate),
            None => write!(f, "*@{}", self.learning_rate),
        }
    }
}

impl FromStr for Stage {
    type Err = NnError;

    /// Parses `EPOCHS@RATE` or `*@RATE`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NnError::InvalidConfig(format!("bad stage {s:?}, expected EPOCHS@RATE or *@RATE"));
        let (epochs, rate) = s.trim().split_once('@').ok_or_else(bad)?;
        let epochs = match epochs.trim() {
            "*" => None,
            n => Some(n.parse().map_err(|_| bad())?),
        };
        let learning_rate = rate.trim().parse().map_err(|_| bad())?;
        Ok(Stage {
            epochs,
            learning_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdSchedule {
    pub stages: Vec<Stage>,
    pub batch_size: usize,
    /// Open-ended stages stop once `(prev - cur) / prev` of the validation
    /// loss drops below this.
    pub stop_rel_improvement: f64,
    /// Hard cap on the epochs an open-ended stage may run.
    pub max_open_epochs: usize,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self {
            stages: Vec::new(),
            batch_size: 100,
            stop_rel_improvement: 0.005,
            max_open_epochs: 10_000,
        }
    }
}

impl SgdSchedule {
    pub fn fixed(epochs: usize, learning_rate: f64) -> Self {
        Self {
            stages: vec![Stage {
                epochs: Some(epochs),
                learning_rate,
            }],
            ..Default::default()
        }
    }

    /// Parses a comma-separated stage list such as `200@0.1,*@0.01`.
    /// An empty string is a schedule with no epochs.
    pub fn parse_stages(list: &str) -> Result<Vec<Stage>, NnError> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn stages_string(&self) -> String {
        self.stages
            .iter()
            .map(Stage::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        for stage in &self.stages {
            if !(stage.learning_rate >= 0.0 && stage.learning_rate.is_finite()) {
                return Err(NnError::InvalidConfig(format!(
                    "learning rate must be a finite nonnegative number, got {}",
                    stage.learning_rate
                )));
            }
        }
        if !self.stop_rel_improvement.is_finite() {
            return Err(NnError::InvalidConfig("stop_rel_improvement must be finite".into()));
        }
        Ok(())
    }
}

/// Paired inputs and targets, one example per row.
#[derive(Debug, Clone, Copy)]
pub struct Pairs<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView2<'a, f64>,
}

impl<'a> Pairs<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, targets: ArrayView2<'a, f64>) -> Result<Self, NnError> {
        if inputs.nrows() != targets.nrows() {
            return Err(NnError::BatchMismatch {
                inputs: inputs.nrows(),
                targets: targets.nrows(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch counter across all stages.
    pub epoch: usize,
    pub stage: usize,
    pub learning_rate: f64,
    /// Example-weighted mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation loss of the parameters before the first update.
    pub initial_valid_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// True when an open-ended stage ended through the stopping rule.
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_valid_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_valid_loss, |r| r.valid_loss)
    }
}

/// Trains `net` in place. Shuffling is driven by a ChaCha stream seeded with
/// `seed`; given identical arguments the resulting parameters and history
/// are bit-identical. `observer` sees every epoch record as soon as it is
/// produced, so callers keep the partial log if training diverges.
pub fn sgd_train(
    net: &mut Network,
    train: Pairs<'_>,
    valid: Pairs<'_>,
    objective: &Objective,
    schedule: &SgdSchedule,
    metric: ValidationMetric,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainHistory, NnError> {
    schedule.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let validate = |net: &Network| -> Result<f64, NnError> {
        let layers: Vec<_> = net.layers().iter().collect();
        evaluate_layers(objective, &layers, valid.inputs, valid.targets).map(|l| l.select(metric))
    };
    let initial_valid_loss = validate(net)?;

    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory {
        initial_valid_loss,
        epochs: Vec::new(),
        stopped_early: false,
    };
    let mut prev_valid = initial_valid_loss;
    let mut epoch = 0;

    'stages: for (stage_idx, stage) in schedule.stages.iter().enumerate() {
        let budget = stage.epochs.unwrap_or(schedule.max_open_epochs);
        for _ in 0..budget {
            epoch += 1;
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for (batch_idx, idx) in order.chunks(schedule.batch_size).enumerate() {
                let x = train.inputs.select(Axis(0), idx);
                let y = train.targets.select(Axis(0), idx);
                let layers: Vec<_> = net.layers().iter().collect();
                let (loss, grads) = gradients_layers(objective, &layers, x.view(), y.view())?;
                let total = loss.total();
                if !total.is_finite() || !grads.is_finite() {
                    return Err(NnError::Diverged {
                        epoch,
                        batch: Some(batch_idx),
                    });
                }
                loss_sum += total * idx.len() as f64;
                for (layer, (gw, gb)) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(grads.weights.iter().zip(&grads.biases))
                {
                    let (w, b) = layer.params_mut();
                    w.scaled_add(-stage.learning_rate, gw);
                    b.scaled_add(-stage.learning_rate, gb);
                }
            }
            let valid_loss = validate(net)?;
            if !valid_loss.is_finite() {
                return Err(NnError::Diverged { epoch, batch: None });
            }
            let record = EpochRecord {
                epoch,
                stage: stage_idx,
                learning_rate: stage.learning_rate,
                train_loss: loss_sum / train.len() as f64,
                valid_loss,
            };
            observer(&record);
            history.epochs.push(record);

            if stage.epochs.is_none() {
                let improvement = if prev_valid > 0.0 {
                    (prev_valid - valid_loss) / prev_valid
                } else {
                    0.0
                };
                if improvement < schedule.stop_rel_improvement {
                    history.stopped_early = true;
                    break 'stages;
                }
            }
            prev_valid = valid_loss;
        }
    }
    Ok(history)
}
