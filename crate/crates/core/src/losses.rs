//! Multi-label losses over sigmoid outputs.
//!
//! All losses take probabilities laid out sample-major (`[N, A]`) and a
//! target vector of the same layout, and record a scalar on the tape.
//! Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
//!
//! The category-weighted loss scales every term of category `c` by
//! `1 / (N * R_c)`, where `R_c` is the category's class count and `N` the
//! batch size:
//!
//! ```text
//! L = - sum_t sum_c sum_k sum_n 1/(N R_c) [ y log p + (1 - y) log(1 - p) ]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BinaryLossTerms, Graph, TensorId};
use crate::error::{dim_err, invalid, Result};
use crate::policy::TaskPolicy;
use crate::real::Real;

/// Probability clamp keeping `log` finite.
pub const PROB_EPS: f64 = 1e-7;

/// Default focusing parameter of the focal losses.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Category-weighted BCE.
    WeightedBce,
    /// Mean BCE with uniform weights.
    PlainBce,
    /// Category-weighted binary focal loss.
    WeightedFocal,
    /// BCE with per-attribute weights from positive-example prevalence.
    BaselineWeightedBce,
    /// Mean binary focal loss.
    Focal,
}

impl LossKind {
    /// Whether the loss applies the per-category `1 / R_c` weights.
    pub fn is_category_weighted(self) -> bool {
        matches!(self, LossKind::WeightedBce | LossKind::WeightedFocal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub focal_gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { kind: LossKind::WeightedBce, focal_gamma: DEFAULT_FOCAL_GAMMA }
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(invalid!("focal gamma must be finite and >= 0, got {}", self.focal_gamma));
        }
        Ok(())
    }

    /// Records the configured loss. `positive_ratios` is required by
    /// [`LossKind::BaselineWeightedBce`] and ignored otherwise.
    pub fn apply<S: Real>(
        &self,
        g: &mut Graph<S>,
        probs: TensorId,
        targets: &[S],
        policy: &TaskPolicy,
        positive_ratios: Option<&[f64]>,
    ) -> Result<TensorId> {
        self.validate()?;
        match self.kind {
            LossKind::WeightedBce => weighted_loss(g, probs, targets, policy),
            LossKind::PlainBce => plain_bce_loss(g, probs, targets),
            LossKind::WeightedFocal => weighted_focal_loss(g, probs, targets, policy, self.focal_gamma),
            LossKind::Focal => focal_loss(g, probs, targets, self.focal_gamma),
            LossKind::BaselineWeightedBce => {
                let ratios = positive_ratios.ok_or_else(|| invalid!("baseline weighted BCE needs positive ratios"))?;
                baseline_weighted_bce(g, probs, targets, ratios)
            }
        }
    }
}

/// Rows (`N`) and columns (`A`) of a probability tensor, after checking the
/// targets against it.
fn layout<S: Real>(g: &Graph<S>, probs: TensorId, targets: &[S], attributes: Option<usize>) -> Result<(usize, usize)> {
    let shape = g.shape(probs);
    let (n, a) = match *shape {
        [a] => (1, a),
        [n, a] => (n, a),
        _ => return Err(dim_err!("probabilities must be [N, A] or [A], got {:?}", shape)),
    };
    if let Some(expected) = attributes {
        if a != expected {
            return Err(dim_err!("probabilities have {} attributes, policy has {}", a, expected));
        }
    }
    if targets.len() != n * a {
        return Err(dim_err!("{} targets for {} probabilities", targets.len(), n * a));
    }
    if let Some(i) = targets.iter().position(|&y| y != S::zero() && y != S::one()) {
        return Err(invalid!("target {} at index {} is not binary", targets[i].as_f64(), i));
    }
    Ok((n, a))
}

/// Records `-sum w_a / N * focal_g(y, p)` with per-attribute weights `w_a`
/// broadcast over the batch.
fn per_attribute<S: Real>(
    g: &mut Graph<S>,
    probs: TensorId,
    targets: &[S],
    pos: &[f64],
    neg: &[f64],
    gamma: f64,
) -> Result<TensorId> {
    let (n, a) = layout(g, probs, targets, Some(pos.len()))?;
    let scale = 1.0 / n as f64;
    let expand = |w: &[f64]| -> Vec<S> { (0..n * a).map(|i| S::of(w[i % a] * scale)).collect() };
    let terms = BinaryLossTerms {
        targets: targets.to_vec(),
        pos_weight: expand(pos),
        neg_weight: expand(neg),
        gamma: S::of(gamma),
        eps: S::of(PROB_EPS),
    };
    g.binary_loss(probs, terms)
}

/// Category-weighted loss with arbitrary per-attribute weights; the public
/// losses derive the weights from the policy.
pub(crate) fn category_weighted<S: Real>(
    g: &mut Graph<S>,
    probs: TensorId,
    targets: &[S],
    weights: &[f64],
    gamma: f64,
) -> Result<TensorId> {
    per_attribute(g, probs, targets, weights, weights, gamma)
}

/// Category-weighted binary cross-entropy.
pub fn weighted_loss<S: Real>(
    g: &mut Graph<S>,
    probs: TensorId,
    targets: &[S],
    policy: &TaskPolicy,
) -> Result<TensorId> {
    category_weighted(g, probs, targets, &policy.category_weights(), 0.0)
}

/// Category-weighted binary focal loss.
pub fn weighted_focal_loss<S: Real>(
    g: &mut Graph<S>,
    probs: TensorId,
    targets: &[S],
    policy: &TaskPolicy,
    gamma: f64,
) -> Result<TensorId> {
    if !(gamma >= 0.0) {
        return Err(invalid!("focal gamma must be >= 0, got {}", gamma));
    }
    category_weighted(g, probs, targets, &policy.category_weights(), gamma)
}

/// Mean binary cross-entropy over every attribute and sample.
pub fn plain_bce_loss<S: Real>(g: &mut Graph<S>, probs: TensorId, targets: &[S]) -> Result<TensorId> {
    focal_loss(g, probs, targets, 0.0)
}

/// Mean binary focal loss `-mean[(1 - p_t)^gamma log p_t]`.
pub fn focal_loss<S: Real>(g: &mut Graph<S>, probs: TensorId, targets: &[S], gamma: f64) -> Result<TensorId> {
    if !(gamma >= 0.0) {
        return Err(invalid!("focal gamma must be >= 0, got {}", gamma));
    }
    let (_, a) = layout(g, probs, targets, None)?;
    let w = vec![1.0 / a as f64; a];
    per_attribute(g, probs, targets, &w, &w, gamma)
}

/// Mean BCE where attribute `m` with training-set positive ratio `r_m`
/// weighs positives by `exp(-r_m)` and negatives by `exp(-(1 - r_m))`.
pub fn baseline_weighted_bce<S: Real>(
    g: &mut Graph<S>,
    probs: TensorId,
    targets: &[S],
    positive_ratios: &[f64],
) -> Result<TensorId> {
    if let Some(r) = positive_ratios.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(invalid!("positive ratio {} outside (0, 1)", r));
    }
    let (_, a) = layout(g, probs, targets, Some(positive_ratios.len()))?;
    let inv_a = 1.0 / a as f64;
    let pos: Vec<f64> = positive_ratios.iter().map(|&r| libm::exp(-r) * inv_a).collect();
    let neg: Vec<f64> = positive_ratios.iter().map(|&r| libm::exp(-(1.0 - r)) * inv_a).collect();
    per_attribute(g, probs, targets, &pos, &neg, 0.0)
}

/// Positive-example ratio of every attribute in a `[N, A]` label matrix,
/// pulled into the open interval by add-one smoothing.
pub fn positive_ratios(labels: &[u8], attributes: usize) -> Vec<f64> {
    let n = labels.len() / attributes.max(1);
    let mut pos = vec![0usize; attributes];
    for row in labels.chunks_exact(attributes) {
        for (c, &y) in pos.iter_mut().zip(row) {
            *c += (y != 0) as usize;
        }
    }
    pos.iter().map(|&c| (c as f64 + 1.0) / (n as f64 + 2.0)).collect()
}
