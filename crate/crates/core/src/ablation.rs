//! Ablation harness: trains a grid of switch settings over several seeds and
//! reports the median test mA of each setting.
//!
//! For a given seed every setting starts from the same initial backbone. The
//! backbone is drawn first from the seed's stream, so settings that share a
//! parameter layout start from bit-identical parameters.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{preprocess, synth_generate, Processed, SynthSpec};
use crate::error::{invalid, Result};
use crate::losses::LossKind;
use crate::metrics::MetricReport;
use crate::model::{Model, ModelConfig};
use crate::policy::TaskPolicy;
use crate::train::{evaluate, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub multi_task_heads: bool,
    pub multiplication_layer: bool,
    pub loss: LossKind,
    /// Full-scale mA reported for this setting elsewhere, shown for
    /// orientation only and never compared against.
    #[serde(default)]
    pub reference: Option<f64>,
}

impl Setting {
    pub fn new(name: &str, multi_task_heads: bool, multiplication_layer: bool, loss: LossKind) -> Self {
        Self { name: name.to_string(), multi_task_heads, multiplication_layer, loss, reference: None }
    }

    fn with_reference(mut self, r: f64) -> Self {
        self.reference = Some(r);
        self
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            multi_task_heads: self.multi_task_heads,
            multiplication_layer: self.multiplication_layer,
            loss: self.loss,
            ..base.clone()
        }
    }
}

/// Architecture rows: shared head, multi-task heads, weighted loss and the
/// multiplication layer.
pub fn architecture_grid() -> Vec<Setting> {
    use LossKind::*;
    alloc::vec![
        Setting::new("shared-head", false, false, PlainBce).with_reference(81.11),
        Setting::new("multi-task", true, false, PlainBce).with_reference(89.18),
        Setting::new("multi-task+weighted", true, false, WeightedBce).with_reference(89.35),
        Setting::new("multi-task+mult", true, true, PlainBce).with_reference(89.73),
        Setting::new("all-on", true, true, WeightedBce),
    ]
}

/// Loss rows, all on the multi-task network with the multiplication layer.
pub fn loss_grid() -> Vec<Setting> {
    use LossKind::*;
    alloc::vec![
        Setting::new("focal", true, true, Focal).with_reference(79.30),
        Setting::new("baseline-weighted-bce", true, true, BaselineWeightedBce).with_reference(90.19),
        Setting::new("weighted-bce", true, true, WeightedBce).with_reference(90.34),
        Setting::new("weighted-focal", true, true, WeightedFocal).with_reference(89.27),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub settings: Vec<Setting>,
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid!("ablation needs at least one seed"));
        }
        if self.settings.is_empty() {
            return Err(invalid!("ablation grid is empty"));
        }
        self.model.validate()?;
        self.train.validate()
    }
}

/// Synthetic train/test protocol for desk-scale comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskProtocol {
    pub train_samples: usize,
    pub test_samples: usize,
    pub clutter: f64,
    pub occluder_probability: f64,
    /// Seed of the training set; the test set uses the next one.
    pub data_seed: u64,
    pub seeds: Vec<u64>,
}

impl Default for DeskProtocol {
    fn default() -> Self {
        Self {
            train_samples: 500,
            test_samples: 200,
            clutter: 0.8,
            occluder_probability: 0.3,
            data_seed: 100,
            seeds: alloc::vec![0, 1, 2],
        }
    }
}

impl DeskProtocol {
    /// Training schedule sized for a laptop. The network is narrow enough
    /// that dropout 0.7 stalls learning within this budget.
    pub fn train_config() -> TrainConfig {
        TrainConfig { learning_rate: 1e-3, epochs: 15, dropout_p: 0.3, ..TrainConfig::default() }
    }

    pub fn spec(&self, settings: Vec<Setting>) -> AblationSpec {
        AblationSpec {
            settings,
            seeds: self.seeds.clone(),
            model: ModelConfig::desk_light(),
            train: Self::train_config(),
        }
    }

    /// Preprocessed `(train, test)` sets for `model`.
    pub fn datasets(&self, model: &ModelConfig) -> Result<(Vec<Processed>, Vec<Processed>)> {
        let make = |n, seed| -> Result<Vec<Processed>> {
            let spec = SynthSpec::new(n, self.clutter, self.occluder_probability, seed);
            synth_generate(&spec)?.iter().map(|s| preprocess(s, model.input_size, model.mask_grid())).collect()
        };
        Ok((make(self.train_samples, self.data_seed)?, make(self.test_samples, self.data_seed + 1)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: Setting,
    /// Test mA per seed, in seed order.
    pub mean_accuracy: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub results: Vec<SettingResult>,
}

impl AblationReport {
    pub fn median(&self, name: &str) -> Option<f64> {
        self.results.iter().find(|r| r.setting.name == name).map(|r| r.median)
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Trains every setting for every seed and evaluates the final model on
/// `test`. `on_run` sees each finished run.
pub fn run_ablation<F>(
    spec: &AblationSpec,
    policy: &TaskPolicy,
    train: &[Processed],
    test: &[Processed],
    mut on_run: F,
) -> Result<AblationReport>
where
    F: FnMut(&Setting, u64, &MetricReport),
{
    spec.validate()?;
    let mut results = Vec::with_capacity(spec.settings.len());
    for setting in &spec.settings {
        let mut accs = Vec::with_capacity(spec.seeds.len());
        for &seed in &spec.seeds {
            let cfg = TrainConfig { seed, ..setting.apply(&spec.train) };
            let model = Model::new(cfg.model_config(&spec.model), policy.clone(), seed)?;
            let mut trainer = Trainer::new(model, cfg)?;
            trainer.fit(train, None, |_, _| Ok(true))?;
            let report = evaluate(trainer.model(), test, spec.train.eval_batch)?;
            on_run(setting, seed, &report);
            accs.push(report.mean_accuracy);
        }
        results.push(SettingResult { setting: setting.clone(), median: median(&accs), mean_accuracy: accs });
    }
    Ok(AblationReport { seeds: spec.seeds.clone(), results })
}
