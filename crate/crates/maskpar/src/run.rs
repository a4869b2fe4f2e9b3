//! Training runs with checkpoints and run records on disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use maskpar_core::data::{preprocess, Processed, Sample};
use maskpar_core::train::{evaluate, TrainConfig, Trainer};
use maskpar_core::{Model, ModelConfig, TaskPolicy};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::manifest::{Dataset, Split};
use crate::report::{self, EpochRecord, RunRecord};

/// Document accepted by `train --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "ModelConfig::desk")]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Seed that produced the data, recorded in the fingerprint.
    #[serde(default)]
    pub data_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { model: ModelConfig::desk(), train: TrainConfig::default(), data_seed: 0 }
    }
}

pub fn prepare(samples: &[Sample], model: &ModelConfig) -> Result<Vec<Processed>> {
    samples
        .iter()
        .map(|s| {
            preprocess(s, model.input_size, model.mask_grid())
                .map_err(|e| Error::Record { id: s.id.clone(), source: Box::new(e.into()) })
        })
        .collect()
}

#[derive(Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    /// The best model by validation mA, or the last one without a
    /// validation split.
    pub model: Model<f32>,
}

/// Paths written into `out`.
pub struct RunFiles {
    pub best: PathBuf,
    pub last: PathBuf,
    pub record: PathBuf,
    pub table: PathBuf,
}

impl RunFiles {
    pub fn new(out: &Path) -> Self {
        Self {
            best: out.join("best.ckpt"),
            last: out.join("last.ckpt"),
            record: out.join("run.json"),
            table: out.join("metrics.txt"),
        }
    }
}

/// Trains on the `train` split, selects by `val` mA and reports on `test`
/// (or `val`, or `train`, whichever exists first). With `resume` the run
/// continues from a checkpoint written by an earlier call.
pub fn train_run(
    policy: &TaskPolicy,
    data: &Dataset,
    cfg: &RunConfig,
    out: Option<&Path>,
    resume: Option<Checkpoint>,
) -> Result<RunOutput> {
    let model_cfg = cfg.train.model_config(&cfg.model);
    let train = prepare(&data.split(Split::Train), &model_cfg)?;
    let val = prepare(&data.split(Split::Val), &model_cfg)?;
    let test = prepare(&data.split(Split::Test), &model_cfg)?;
    if train.is_empty() {
        return Err(maskpar_core::Error::Validation("no training samples".into()).into());
    }
    let files = out.map(|o| {
        std::fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
        Ok::<_, Error>(RunFiles::new(o))
    });
    let files = files.transpose()?;

    let mut trainer = match resume {
        Some(ck) => {
            let state = ck.resume.ok_or_else(|| Error::config("checkpoint carries no optimizer state"))?;
            if ck.model.config() != &model_cfg || ck.model.policy() != policy {
                return Err(Error::config("checkpoint was written for a different model or policy"));
            }
            Trainer::resume(ck.model, cfg.train.clone(), state)?
        }
        None => Trainer::new(Model::new(model_cfg.clone(), policy.clone(), cfg.train.seed)?, cfg.train.clone())?,
    };

    let mut record = RunRecord {
        fingerprint: report::fingerprint(&model_cfg, &cfg.train, policy, cfg.data_seed),
        epochs: Vec::new(),
        best_epoch: None,
        final_report: None,
        error: None,
    };
    let start = Instant::now();
    let val_ref = (!val.is_empty()).then_some(val.as_slice());
    let mut save_error = None;
    let fitted = trainer.fit(&train, val_ref, |t, stats| {
        record.epochs.push(EpochRecord {
            epoch: stats.epoch,
            step_losses: stats.step_losses.clone(),
            mean_loss: stats.mean_loss,
            val_mean_accuracy: stats.val_mean_accuracy,
            wall_clock: start.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {} loss {:.4}{}",
            stats.epoch,
            stats.mean_loss,
            stats.val_mean_accuracy.map_or(String::new(), |v| format!(" val mA {:.2}%", 100.0 * v))
        );
        if let Some(f) = &files {
            let ck = Checkpoint {
                model: t.model().clone(),
                train: Some(t.config().clone()),
                resume: Some(t.resume_state()),
            };
            if let Err(e) = checkpoint::save(&f.last, &ck) {
                save_error = Some(e);
                return Ok(false);
            }
        }
        Ok(true)
    });
    if let Some(e) = save_error {
        return Err(e);
    }
    if let Err(e) = fitted {
        record.error = Some(e.to_string());
        if let Some(f) = &files {
            report::write_json(&f.record, &record)?;
        }
        return Err(e.into());
    }

    let mut model = trainer.model().clone();
    if let Some(best) = trainer.best() {
        record.best_epoch = Some(best.epoch);
        *model.params_mut() = best.params.clone();
    }
    let report_on = [&test, &val, &train].into_iter().find(|d| !d.is_empty()).expect("train is non-empty");
    let final_report = evaluate(&model, report_on, cfg.train.eval_batch)?;
    if let Some(f) = &files {
        checkpoint::save(&f.best, &Checkpoint { model: model.clone(), train: Some(cfg.train.clone()), resume: None })?;
        std::fs::write(&f.table, report::metric_table(&final_report)).map_err(|e| Error::io(&f.table, e))?;
    }
    record.final_report = Some(final_report);
    if let Some(f) = &files {
        report::write_json(&f.record, &record)?;
    }
    Ok(RunOutput { record, model })
}
