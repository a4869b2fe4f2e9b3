//! Run records, configuration fingerprints and text tables.

use std::fmt::Write as _;
use std::path::Path;

use maskpar_core::ablation::AblationReport;
use maskpar_core::train::TrainConfig;
use maskpar_core::{MetricReport, ModelConfig, TaskPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step_losses: Vec<f64>,
    pub mean_loss: f64,
    pub val_mean_accuracy: Option<f64>,
    /// Seconds since the run started.
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Report of the saved model on the evaluation split.
    pub final_report: Option<MetricReport>,
    /// Why the run stopped early, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    /// Losses only, without timings: the part that repeats bit for bit.
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().flat_map(|e| e.step_losses.iter().copied()).collect()
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    policy: &'a TaskPolicy,
    data_seed: u64,
}

/// SHA-256 over the canonical JSON of everything that determines a run.
pub fn fingerprint(model: &ModelConfig, train: &TrainConfig, policy: &TaskPolicy, data_seed: u64) -> String {
    let json = serde_json::to_vec(&FingerprintInput { model, train, policy, data_seed }).expect("configs serialize");
    Sha256::digest(&json).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn metric_table(r: &MetricReport) -> String {
    let mut s = String::new();
    let width = r.attributes.iter().map(|a| a.name.len()).max().unwrap_or(4).max(9);
    let _ = writeln!(s, "{:width$}  {:>4} {:>4} {:>4} {:>4}  {:>7}", "attribute", "P", "TP", "N", "TN", "mA");
    for a in &r.attributes {
        let c = a.counts;
        let flag = if a.flagged { " *" } else { "" };
        let _ = writeln!(
            s,
            "{:width$}  {:>4} {:>4} {:>4} {:>4}  {:>6.2}%{flag}",
            a.name,
            c.positives,
            c.true_positives,
            c.negatives,
            c.true_negatives,
            100.0 * a.accuracy
        );
    }
    for t in &r.tasks {
        let _ = writeln!(s, "task {:width$} {:>6.2}%", t.name, 100.0 * t.mean_accuracy, width = width - 4);
    }
    let _ = writeln!(
        s,
        "mA over {} attributes, {} samples: {:.2}%",
        r.attributes.len(),
        r.samples,
        100.0 * r.mean_accuracy
    );
    if r.attributes.iter().any(|a| a.flagged) {
        let _ = writeln!(s, "* split lacks positives or negatives; only the defined rate is used");
    }
    s
}

pub fn ablation_table(r: &AblationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:24} {:>6} {:>6} {:14} {:>9}  per seed", "setting", "multi", "mult", "loss", "median");
    for row in &r.results {
        let st = &row.setting;
        let per: Vec<String> = row.mean_accuracy.iter().map(|v| format!("{:.2}", 100.0 * v)).collect();
        let reference = st.reference.map_or(String::new(), |v| format!("  (reference {v:.2})"));
        let _ = writeln!(
            s,
            "{:24} {:>6} {:>6} {:14} {:>8.2}%  {}{reference}",
            st.name,
            if st.multi_task_heads { "yes" } else { "no" },
            if st.multiplication_layer { "yes" } else { "no" },
            format!("{:?}", st.loss),
            100.0 * row.median,
            per.join(" ")
        );
    }
    s
}
