//! Label-based mean accuracy (mA).
//!
//! For attribute `m` with `P` positive and `N` negative ground-truth samples,
//! of which `TP` and `TN` are recognised correctly,
//! `mA_m = (TP / P + TN / N) / 2`, and the reported mA is the mean of
//! `mA_m` over all attributes. When an evaluation split has no positives
//! (or no negatives) for an attribute, only the defined ratio is used and the
//! attribute is flagged.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::policy::TaskPolicy;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCounts {
    pub positives: u64,
    pub negatives: u64,
    pub true_positives: u64,
    pub true_negatives: u64,
}

impl AttributeCounts {
    /// Balanced accuracy, and whether one of the two ratios was undefined.
    pub fn accuracy(&self) -> (f64, bool) {
        let (p, n) = (self.positives, self.negatives);
        match (p > 0, n > 0) {
            // one rounding of (TP N + TN P) / 2PN
            (true, true) => {
                let num = self.true_positives as u128 * n as u128 + self.true_negatives as u128 * p as u128;
                (num as f64 / (2 * p as u128 * n as u128) as f64, false)
            }
            (true, false) => (self.true_positives as f64 / p as f64, true),
            (false, true) => (self.true_negatives as f64 / n as f64, true),
            (false, false) => (0.0, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetric {
    pub name: String,
    pub counts: AttributeCounts,
    pub accuracy: f64,
    /// Set when the split lacked positives or negatives for this attribute.
    pub flagged: bool,
}

/// Mean of `mA_m` over a group of attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollup {
    pub name: String,
    pub attributes: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    pub attributes: Vec<AttributeMetric>,
    pub mean_accuracy: f64,
    pub tasks: Vec<Rollup>,
    pub categories: Vec<Rollup>,
}

/// Builds a report from binary predictions and targets, both laid out
/// sample-major as `[N, A]`.
pub fn mean_accuracy(predictions: &[u8], targets: &[u8], attributes: usize) -> Result<MetricReport> {
    if predictions.len() != targets.len() {
        return Err(dim_err!("{} predictions vs {} targets", predictions.len(), targets.len()));
    }
    if attributes == 0 || !targets.len().is_multiple_of(attributes) {
        return Err(dim_err!("{} labels do not split into rows of {}", targets.len(), attributes));
    }
    if targets.is_empty() {
        return Err(invalid!("no samples to evaluate"));
    }
    if let Some(v) = predictions.iter().chain(targets).find(|&&v| v > 1) {
        return Err(invalid!("label value {} is not binary", v));
    }
    let mut counts = vec![AttributeCounts::default(); attributes];
    for (prow, trow) in predictions.chunks_exact(attributes).zip(targets.chunks_exact(attributes)) {
        for ((c, &p), &t) in counts.iter_mut().zip(prow).zip(trow) {
            if t == 1 {
                c.positives += 1;
                c.true_positives += (p == 1) as u64;
            } else {
                c.negatives += 1;
                c.true_negatives += (p == 0) as u64;
            }
        }
    }
    let metrics: Vec<AttributeMetric> = counts
        .into_iter()
        .enumerate()
        .map(|(i, counts)| {
            let (accuracy, flagged) = counts.accuracy();
            AttributeMetric { name: format!("attr{i}"), counts, accuracy, flagged }
        })
        .collect();
    let mean = metrics.iter().map(|m| m.accuracy).sum::<f64>() / attributes as f64;
    Ok(MetricReport {
        samples: targets.len() / attributes,
        attributes: metrics,
        mean_accuracy: mean,
        tasks: Vec::new(),
        categories: Vec::new(),
    })
}

impl MetricReport {
    /// Names attributes after the policy and adds per-task and per-category
    /// roll-ups.
    pub fn annotate(mut self, policy: &TaskPolicy) -> Result<Self> {
        if policy.attribute_count() != self.attributes.len() {
            return Err(dim_err!(
                "report has {} attributes, policy has {}",
                self.attributes.len(),
                policy.attribute_count()
            ));
        }
        let mut tasks: Vec<(String, Vec<f64>)> = Vec::new();
        let mut cats: Vec<(String, Vec<f64>)> = Vec::new();
        for a in policy.attributes() {
            let m = &mut self.attributes[a.index];
            m.name = format!("{}/{}/{}", a.task_name, a.category_name, a.class_name);
            let tname = String::from(a.task_name);
            let cname = format!("{}/{}", a.task_name, a.category_name);
            match tasks.last_mut() {
                Some((n, v)) if *n == tname => v.push(m.accuracy),
                _ => tasks.push((tname, vec![m.accuracy])),
            }
            match cats.last_mut() {
                Some((n, v)) if *n == cname => v.push(m.accuracy),
                _ => cats.push((cname, vec![m.accuracy])),
            }
        }
        let roll = |groups: Vec<(String, Vec<f64>)>| {
            groups
                .into_iter()
                .map(|(name, v)| Rollup {
                    name,
                    attributes: v.len(),
                    mean_accuracy: v.iter().sum::<f64>() / v.len() as f64,
                })
                .collect()
        };
        self.tasks = roll(tasks);
        self.categories = roll(cats);
        Ok(self)
    }

    /// Fraction of correct binary decisions per attribute (plain accuracy).
    pub fn plain_accuracy(&self) -> Vec<f64> {
        self.attributes
            .iter()
            .map(|m| {
                let c = m.counts;
                (c.true_positives + c.true_negatives) as f64 / (c.positives + c.negatives) as f64
            })
            .collect()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &AttributeMetric> {
        self.attributes.iter().filter(|m| m.flagged)
    }
}
