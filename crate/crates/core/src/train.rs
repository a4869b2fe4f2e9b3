//! Training engine: seeded shuffling, augmentation, Adam updates, batch-norm
//! statistics, evaluation and best-model tracking.
//!
//! Everything here is a pure function of the seed, the configuration and the
//! data. Wall-clock timing and file output are left to the caller through the
//! per-epoch callback of [`Trainer::fit`].

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode};
use crate::data::{augment_seeded, collate, Processed};
use crate::error::{config_err, invalid, Error, Result};
use crate::losses::{positive_ratios, LossConfig, LossKind, DEFAULT_FOCAL_GAMMA};
use crate::metrics::{mean_accuracy, MetricReport};
use crate::model::{predict_labels, HeadLayout, Model, ModelConfig, ParamStore};
use crate::optim::{Adam, AdamConfig, AdamState};
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub loss: LossKind,
    pub focal_gamma: f64,
    pub seed: u64,
    /// One branch head per task; off collapses them into one shared head.
    pub multi_task_heads: bool,
    pub multiplication_layer: bool,
    /// Random affine augmentation of training samples.
    pub augment: bool,
    /// Evaluation batch size; any value gives identical reports.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            lr_decay: 1e-6,
            epochs: 200,
            batch_size: 8,
            dropout_p: 0.7,
            loss: LossKind::WeightedBce,
            focal_gamma: DEFAULT_FOCAL_GAMMA,
            seed: 0,
            multi_task_heads: true,
            multiplication_layer: true,
            augment: true,
            eval_batch: 32,
        }
    }
}

impl TrainConfig {
    /// The weighted-loss switch; it follows from the loss kind.
    pub fn weighted_loss(&self) -> bool {
        self.loss.is_category_weighted()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { kind: self.loss, focal_gamma: self.focal_gamma }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, decay: self.lr_decay, ..AdamConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(config_err!("lr_decay must be finite and non-negative, got {}", self.lr_decay));
        }
        if self.batch_size < 2 {
            return Err(config_err!("batch_size must be at least 2 for batch norm, got {}", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(config_err!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.eval_batch == 0 {
            return Err(config_err!("eval_batch must be positive"));
        }
        self.loss_config().validate()
    }

    /// Applies the switches and dropout rate to an architecture.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            dropout_p: self.dropout_p,
            head_layout: if self.multi_task_heads { HeadLayout::PerTask } else { HeadLayout::Shared },
            multiplication_layer: self.multiplication_layer,
            ..base.clone()
        }
    }
}

/// Summary of one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Loss of every update, in order.
    pub step_losses: Vec<f64>,
    pub mean_loss: f64,
    pub val_mean_accuracy: Option<f64>,
}

/// Best validation result seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestModel {
    pub epoch: usize,
    pub mean_accuracy: f64,
    pub params: ParamStore<f32>,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeState {
    pub epochs_done: usize,
    pub optimizer: AdamState<f32>,
}

pub struct Trainer {
    model: Model<f32>,
    optimizer: Adam<f32>,
    config: TrainConfig,
    epochs_done: usize,
    best: Option<BestModel>,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(config.adam(), model.params());
        Ok(Self { model, optimizer, config, epochs_done: 0, best: None })
    }

    /// Continues from a saved model and optimizer state.
    pub fn resume(model: Model<f32>, config: TrainConfig, state: ResumeState) -> Result<Self> {
        config.validate()?;
        state.optimizer.ensure_matches(model.params())?;
        let optimizer = Adam { config: config.adam(), state: state.optimizer };
        Ok(Self { model, optimizer, config, epochs_done: state.epochs_done, best: None })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn into_model(self) -> Model<f32> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn best(&self) -> Option<&BestModel> {
        self.best.as_ref()
    }

    pub fn resume_state(&self) -> ResumeState {
        ResumeState { epochs_done: self.epochs_done, optimizer: self.optimizer.state.clone() }
    }

    /// One update on a batch. Returns the loss before the update.
    pub fn step(&mut self, batch: &[&Processed], ratios: Option<&[f64]>) -> Result<f64> {
        let step = self.optimizer.state.step;
        let (images, masks, targets) = collate(batch)?;
        let mut g = Graph::new();
        let seed = rng::mix(self.config.seed, step);
        let pass = self.model.forward(&mut g, &images, &masks, Mode::Train, seed)?;
        let loss = self.config.loss_config().apply(&mut g, pass.probs, &targets, self.model.policy(), ratios)?;
        let value = g.value(loss).values()[0].as_f64();
        if !value.is_finite() {
            return Err(Error::Divergence { step, detail: format!("loss is {value}") });
        }
        let grads = g.backward(loss)?;
        self.optimizer.step(self.model.params_mut(), &pass.bindings, &grads)?;
        self.model.apply_norm_updates(&pass.norm_updates);
        if let Some(p) = self.model.params().entries().iter().find(|p| !p.tensor.all_finite()) {
            return Err(Error::Divergence { step, detail: format!("parameter '{}' is no longer finite", p.name) });
        }
        Ok(value)
    }

    /// One pass over `train` in a seeded order. A trailing batch of one
    /// sample is skipped because batch norm needs two.
    pub fn train_epoch(&mut self, train: &[Processed]) -> Result<EpochStats> {
        if train.len() < 2 {
            return Err(invalid!("training needs at least 2 samples, got {}", train.len()));
        }
        let epoch = self.epochs_done;
        let a = self.model.policy().attribute_count();
        let ratios = (self.config.loss == LossKind::BaselineWeightedBce).then(|| {
            let labels: Vec<u8> = train.iter().flat_map(|p| p.labels.iter().copied()).collect();
            positive_ratios(&labels, a)
        });
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::rng(rng::mix(self.config.seed ^ 0x5348_5546, epoch as u64)));
        let mut step_losses = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let augmented: Vec<Processed>;
            let batch: Vec<&Processed> = if self.config.augment {
                augmented = chunk
                    .iter()
                    .map(|&i| augment_seeded(&train[i], self.config.seed, epoch as u64))
                    .collect::<Result<_>>()?;
                augmented.iter().collect()
            } else {
                chunk.iter().map(|&i| &train[i]).collect()
            };
            step_losses.push(self.step(&batch, ratios.as_deref())?);
        }
        self.epochs_done += 1;
        let mean_loss = step_losses.iter().sum::<f64>() / step_losses.len() as f64;
        Ok(EpochStats { epoch, step_losses, mean_loss, val_mean_accuracy: None })
    }

    /// Runs the remaining epochs. After each epoch the model is evaluated on
    /// `val` (when given), the best-mA parameters are kept, and `on_epoch`
    /// is called; returning `false` from it stops training early.
    pub fn fit<F>(&mut self, train: &[Processed], val: Option<&[Processed]>, mut on_epoch: F) -> Result<Vec<EpochStats>>
    where
        F: FnMut(&Trainer, &EpochStats) -> Result<bool>,
    {
        let mut history = Vec::new();
        while self.epochs_done < self.config.epochs {
            let mut stats = self.train_epoch(train)?;
            if let Some(val) = val {
                let ma = evaluate(&self.model, val, self.config.eval_batch)?.mean_accuracy;
                stats.val_mean_accuracy = Some(ma);
                if self.best.as_ref().is_none_or(|b| ma > b.mean_accuracy) {
                    self.best =
                        Some(BestModel { epoch: stats.epoch, mean_accuracy: ma, params: self.model.params().clone() });
                }
            }
            let go_on = on_epoch(self, &stats)?;
            history.push(stats);
            if !go_on {
                break;
            }
        }
        Ok(history)
    }
}

/// Eval-mode probabilities for every sample, sample-major.
pub fn predict_probabilities(model: &Model<f32>, data: &[Processed], batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len() * model.policy().attribute_count());
    for chunk in data.chunks(batch.max(1)) {
        let refs: Vec<&Processed> = chunk.iter().collect();
        let (images, masks, _) = collate(&refs)?;
        let mut g = Graph::new();
        let pass = model.forward(&mut g, &images, &masks, Mode::Eval, 0)?;
        out.extend(g.value(pass.probs).values().iter().map(|v| v.as_f64()));
    }
    Ok(out)
}

/// Mean accuracy of the thresholded eval-mode predictions on `data`.
pub fn evaluate(model: &Model<f32>, data: &[Processed], batch: usize) -> Result<MetricReport> {
    if data.is_empty() {
        return Err(invalid!("cannot evaluate on an empty dataset"));
    }
    let a = model.policy().attribute_count();
    if let Some(p) = data.iter().find(|p| p.labels.len() != a) {
        return Err(crate::error::dim_err!("sample '{}' has {} labels, policy has {}", p.id, p.labels.len(), a));
    }
    let preds = predict_labels(&predict_probabilities(model, data, batch)?);
    let targets: Vec<u8> = data.iter().flat_map(|p| p.labels.iter().copied()).collect();
    mean_accuracy(&preds, &targets, a)?.annotate(model.policy())
}
