//! The multi-task attribute network.
//!
//! ```text
//! image -> stem -> residual stages -> BN/ReLU -> F (g x g x D)
//!                                               |
//!                     mask (g x g x 1) ------> F * M = G -> GAP -> D
//!                                                                |
//!                                      one branch head per task <+
//!                                      -> sigmoid probabilities, policy order
//! ```

mod config;
pub mod layers;
mod params;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Mode, TensorId};
use crate::error::{config_err, dim_err, Result};
use crate::policy::TaskPolicy;
use crate::real::Real;
use crate::rng;
use crate::tensor::{Nhwc, Tensor};

pub use config::{HeadLayout, ModelConfig};
use layers::{BlockParams, ConvLayer, DenseLayer, HeadParams, NormLayer, NormUpdate};
pub use params::{Param, ParamKind, ParamStore};

/// Running-statistics momentum of batch norm.
pub const BN_MOMENTUM: f64 = 0.9;

/// Decision threshold; a probability equal to it maps to label 1.
pub const LABEL_THRESHOLD: f64 = 0.5;

/// Per-sample model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Prediction {
    pub fn new(probabilities: Vec<f64>) -> Self {
        let labels = predict_labels(&probabilities);
        Self { probabilities, labels }
    }
}

/// `[p >= 0.5]` elementwise. Categories are not forced to be one-hot.
pub fn predict_labels(probabilities: &[f64]) -> Vec<u8> {
    probabilities.iter().map(|&p| (p >= LABEL_THRESHOLD) as u8).collect()
}

/// Tape handles of every model tensor, aligned with the [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bindings {
    pub ids: Vec<TensorId>,
}

/// Handles produced by [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<S> {
    pub images: TensorId,
    /// Backbone output `F`.
    pub features: TensorId,
    /// Masked features `G` (equal to `features` when the layer is disabled).
    pub glimpses: TensorId,
    pub pooled: TensorId,
    /// One output per head, in policy order.
    pub head_outputs: Vec<TensorId>,
    /// `[N, A]` probabilities.
    pub probs: TensorId,
    pub bindings: Bindings,
    pub norm_updates: Vec<NormUpdate<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    config: ModelConfig,
    policy: TaskPolicy,
    params: ParamStore<S>,
}

struct Spec {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
}

fn head_prefix(config: &ModelConfig, policy: &TaskPolicy) -> Vec<(String, usize)> {
    match config.head_layout {
        HeadLayout::PerTask => policy.tasks().iter().map(|t| (format!("head.{}", t.name), t.width())).collect(),
        HeadLayout::Shared => vec![(String::from("head.shared"), policy.attribute_count())],
    }
}

/// Names, kinds and shapes of every tensor the configuration needs.
fn layout(config: &ModelConfig, policy: &TaskPolicy) -> Vec<Spec> {
    let mut out = Vec::new();
    let mut push = |name: String, kind, shape: Vec<usize>| out.push(Spec { name, kind, shape });
    let conv = |push: &mut dyn FnMut(String, ParamKind, Vec<usize>), p: &str, k, i, o| {
        push(format!("{p}.weight"), ParamKind::Weight, vec![k, k, i, o]);
        push(format!("{p}.bias"), ParamKind::Bias, vec![o]);
    };
    let norm = |push: &mut dyn FnMut(String, ParamKind, Vec<usize>), p: &str, c| {
        push(format!("{p}.gamma"), ParamKind::Scale, vec![c]);
        push(format!("{p}.beta"), ParamKind::Shift, vec![c]);
        push(format!("{p}.running_mean"), ParamKind::RunningMean, vec![c]);
        push(format!("{p}.running_var"), ParamKind::RunningVar, vec![c]);
    };
    conv(&mut push, "stem.conv", config.stem_kernel, 3, config.stem_channels);
    norm(&mut push, "stem.bn", config.stem_channels);
    let mut c_in = config.stem_channels;
    for (s, &c_out) in config.stage_channels.iter().enumerate() {
        for b in 0..config.blocks_per_stage {
            let p = format!("stage{s}.block{b}");
            let i = if b == 0 { c_in } else { c_out };
            norm(&mut push, &format!("{p}.bn1"), i);
            conv(&mut push, &format!("{p}.conv1"), 3, i, c_out);
            norm(&mut push, &format!("{p}.bn2"), c_out);
            conv(&mut push, &format!("{p}.conv2"), 3, c_out, c_out);
            if b == 0 {
                conv(&mut push, &format!("{p}.proj"), 1, i, c_out);
            }
        }
        c_in = c_out;
    }
    norm(&mut push, "final_bn", config.feature_depth());
    let w = &config.branch_widths;
    for (p, width) in head_prefix(config, policy) {
        let dims = [config.feature_depth(), w[0], w[1], w[2], width];
        for l in 0..4 {
            push(format!("{p}.dense{l}.weight"), ParamKind::Weight, vec![dims[l], dims[l + 1]]);
            push(format!("{p}.dense{l}.bias"), ParamKind::Bias, vec![dims[l + 1]]);
        }
    }
    out
}

impl<S: Real> Model<S> {
    /// Fresh model with He-normal weights, zero biases and identity norms.
    pub fn new(config: ModelConfig, policy: TaskPolicy, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::rng(seed);
        let mut params = ParamStore::new();
        for spec in layout(&config, &policy) {
            let n: usize = spec.shape.iter().product();
            let values: Vec<S> = match spec.kind {
                ParamKind::Weight => {
                    let fan_in: usize = spec.shape[..spec.shape.len() - 1].iter().product();
                    let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("positive std");
                    (0..n).map(|_| S::of(normal.sample(&mut r))).collect()
                }
                ParamKind::Bias | ParamKind::Shift | ParamKind::RunningMean => vec![S::zero(); n],
                ParamKind::Scale | ParamKind::RunningVar => vec![S::one(); n],
            };
            params.insert(&spec.name, spec.kind, Tensor::new(spec.shape, values)?)?;
        }
        Ok(Self { config, policy, params })
    }

    /// Wraps existing tensors after checking them against the configuration.
    pub fn from_params(config: ModelConfig, policy: TaskPolicy, params: ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config, &policy);
        if expected.len() != params.len() {
            return Err(config_err!("configuration needs {} tensors, {} supplied", expected.len(), params.len()));
        }
        for (spec, p) in expected.iter().zip(params.entries()) {
            if spec.name != p.name || spec.kind != p.kind || spec.shape != p.tensor.shape() {
                return Err(config_err!(
                    "expected '{}' {:?}, found '{}' {:?}",
                    spec.name,
                    spec.shape,
                    p.name,
                    p.tensor.shape()
                ));
            }
        }
        Ok(Self { config, policy, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn policy(&self) -> &TaskPolicy {
        &self.policy
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn cast<T: Real>(&self) -> Model<T> {
        Model { config: self.config.clone(), policy: self.policy.clone(), params: self.params.cast() }
    }

    /// Records every model tensor on `g` as a variable.
    pub fn bind(&self, g: &mut Graph<S>) -> Bindings {
        Bindings { ids: self.params.entries().iter().map(|p| g.variable(p.tensor.clone())).collect() }
    }

    fn id(&self, b: &Bindings, name: &str) -> Result<TensorId> {
        self.params.position(name).map(|i| b.ids[i]).ok_or_else(|| config_err!("missing parameter '{}'", name))
    }

    fn conv_layer(&self, b: &Bindings, p: &str) -> Result<ConvLayer> {
        Ok(ConvLayer { weight: self.id(b, &format!("{p}.weight"))?, bias: Some(self.id(b, &format!("{p}.bias"))?) })
    }

    fn norm_layer(&self, b: &Bindings, p: &str) -> Result<NormLayer<S>> {
        let tag =
            self.params.position(&format!("{p}.running_mean")).ok_or_else(|| config_err!("missing norm '{}'", p))?;
        let entries = self.params.entries();
        Ok(NormLayer {
            gamma: self.id(b, &format!("{p}.gamma"))?,
            beta: self.id(b, &format!("{p}.beta"))?,
            running_mean: entries[tag].tensor.values().to_vec(),
            running_var: entries[tag + 1].tensor.values().to_vec(),
            tag,
        })
    }

    /// Parameters of residual block `block` of stage `stage`.
    pub fn block_params(&self, b: &Bindings, stage: usize, block: usize) -> Result<BlockParams<S>> {
        let p = format!("stage{stage}.block{block}");
        Ok(BlockParams {
            bn1: self.norm_layer(b, &format!("{p}.bn1"))?,
            conv1: self.conv_layer(b, &format!("{p}.conv1"))?,
            bn2: self.norm_layer(b, &format!("{p}.bn2"))?,
            conv2: self.conv_layer(b, &format!("{p}.conv2"))?,
            projection: if block == 0 { Some(self.conv_layer(b, &format!("{p}.proj"))?) } else { None },
        })
    }

    /// Parameters of every branch head, in policy order.
    pub fn head_params(&self, b: &Bindings) -> Result<Vec<HeadParams>> {
        head_prefix(&self.config, &self.policy)
            .iter()
            .map(|(p, _)| {
                let l = |i: usize| -> Result<DenseLayer> {
                    Ok(DenseLayer {
                        weight: self.id(b, &format!("{p}.dense{i}.weight"))?,
                        bias: self.id(b, &format!("{p}.dense{i}.bias"))?,
                    })
                };
                Ok(HeadParams { layers: [l(0)?, l(1)?, l(2)?, l(3)?] })
            })
            .collect()
    }

    /// Stem plus residual stages; `images` is `[N, S, S, 3]` or `[S, S, 3]`.
    pub fn backbone_forward(
        &self,
        g: &mut Graph<S>,
        b: &Bindings,
        images: TensorId,
        mode: Mode,
        updates: &mut Vec<NormUpdate<S>>,
    ) -> Result<TensorId> {
        let geom = Nhwc::of(g.shape(images))?;
        let s = self.config.input_size;
        if geom.h != s || geom.w != s || geom.c != 3 {
            return Err(crate::error::invalid!("expected {}x{}x3 images, got {:?}", s, s, g.shape(images)));
        }
        let stem = self.conv_layer(b, "stem.conv")?;
        let mut h = g.conv2d(images, stem.weight, stem.bias, 1, self.config.stem_kernel / 2)?;
        h = layers::norm_forward(g, h, &self.norm_layer(b, "stem.bn")?, mode, updates)?;
        h = g.relu(h)?;
        for stage in 0..self.config.stages {
            for block in 0..self.config.blocks_per_stage {
                let p = self.block_params(b, stage, block)?;
                h = layers::residual_block_forward(g, h, &p, mode, updates)?;
            }
        }
        h = layers::norm_forward(g, h, &self.norm_layer(b, "final_bn")?, mode, updates)?;
        g.relu(h)
    }

    /// Hard attention `G = F * M` with the single-channel mask broadcast
    /// across the feature depth. The mask must be binary.
    pub fn attention_multiply(&self, g: &mut Graph<S>, features: TensorId, masks: &Tensor<S>) -> Result<TensorId> {
        let f = Nhwc::of(g.shape(features))?;
        let m = Nhwc::of(masks.shape())?;
        if m.c != 1 || (m.h, m.w, m.n) != (f.h, f.w, f.n) {
            return Err(dim_err!("mask {:?} does not match the {}x{} feature grid", masks.shape(), f.h, f.w));
        }
        g.mask_mul(features, masks, true)
    }

    /// Every branch head on the pooled features; returns the per-head outputs
    /// and their concatenation.
    pub fn heads_forward(
        &self,
        g: &mut Graph<S>,
        b: &Bindings,
        pooled: TensorId,
        mode: Mode,
        seed: u64,
    ) -> Result<(Vec<TensorId>, TensorId)> {
        let heads = self.head_params(b)?;
        let mut outs = Vec::with_capacity(heads.len());
        for (t, head) in heads.iter().enumerate() {
            outs.push(layers::branch_forward(g, pooled, head, self.config.dropout_p, mode, rng::mix(seed, t as u64))?);
        }
        let probs = if outs.len() == 1 { outs[0] } else { g.concat_last(&outs)? };
        Ok((outs, probs))
    }

    /// Everything after the backbone: masking (when enabled), pooling and heads.
    /// Returns `(glimpses, pooled, head outputs, probabilities)`.
    pub fn forward_from_features(
        &self,
        g: &mut Graph<S>,
        b: &Bindings,
        features: TensorId,
        masks: &Tensor<S>,
        mode: Mode,
        seed: u64,
    ) -> Result<(TensorId, TensorId, Vec<TensorId>, TensorId)> {
        let glimpses =
            if self.config.multiplication_layer { self.attention_multiply(g, features, masks)? } else { features };
        let pooled = g.global_avg_pool(glimpses)?;
        let (heads, probs) = self.heads_forward(g, b, pooled, mode, seed)?;
        Ok((glimpses, pooled, heads, probs))
    }

    /// Full forward pass. `images` is `[N, S, S, 3]`, `masks` is
    /// `[N, g, g, 1]` with `g` the mask grid. `seed` drives dropout.
    pub fn forward(
        &self,
        g: &mut Graph<S>,
        images: &Tensor<S>,
        masks: &Tensor<S>,
        mode: Mode,
        seed: u64,
    ) -> Result<ForwardPass<S>> {
        let bindings = self.bind(g);
        let img = g.input(images.clone());
        let mut norm_updates = Vec::new();
        let features = self.backbone_forward(g, &bindings, img, mode, &mut norm_updates)?;
        let (glimpses, pooled, head_outputs, probs) =
            self.forward_from_features(g, &bindings, features, masks, mode, seed)?;
        Ok(ForwardPass { images: img, features, glimpses, pooled, head_outputs, probs, bindings, norm_updates })
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn apply_norm_updates(&mut self, updates: &[NormUpdate<S>]) {
        let m = S::of(BN_MOMENTUM);
        let one_m = S::one() - m;
        for u in updates {
            let count = u.stats.count;
            let unbias = if count > 1 { S::of(count as f64 / (count - 1) as f64) } else { S::one() };
            let entries = self.params.entries_mut();
            for (r, &v) in entries[u.tag].tensor.values_mut().iter_mut().zip(&u.stats.mean) {
                *r = m * *r + one_m * v;
            }
            for (r, &v) in entries[u.tag + 1].tensor.values_mut().iter_mut().zip(&u.stats.var) {
                *r = m * *r + one_m * v * unbias;
            }
        }
    }

    /// Eval-mode predictions for a batch.
    pub fn predict(&self, images: &Tensor<S>, masks: &Tensor<S>) -> Result<Vec<Prediction>> {
        let mut g = Graph::new();
        let pass = self.forward(&mut g, images, masks, Mode::Eval, 0)?;
        let a = self.policy.attribute_count();
        Ok(g.value(pass.probs)
            .values()
            .chunks_exact(a)
            .map(|row| Prediction::new(row.iter().map(|v| v.as_f64()).collect()))
            .collect())
    }
}

#[cfg(test)]
mod tests;
