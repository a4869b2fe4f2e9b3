//! Building blocks wired from tape handles, so the same code runs inside the
//! model and under the finite-difference checker.

use alloc::vec::Vec;

use crate::autodiff::{BatchStats, Graph, Mode, TensorId};
use crate::error::{dim_err, Result};
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub weight: TensorId,
    pub bias: Option<TensorId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayer {
    pub weight: TensorId,
    pub bias: TensorId,
}

/// Batch norm handles plus the running statistics used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NormLayer<S> {
    pub gamma: TensorId,
    pub beta: TensorId,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    /// Caller tag attached to the statistics emitted in train mode.
    pub tag: usize,
}

/// Batch statistics of one train-mode normalization, keyed by its tag.
#[derive(Debug, Clone, PartialEq)]
pub struct NormUpdate<S> {
    pub tag: usize,
    pub stats: BatchStats<S>,
}

pub fn norm_forward<S: Real>(
    g: &mut Graph<S>,
    x: TensorId,
    layer: &NormLayer<S>,
    mode: Mode,
    updates: &mut Vec<NormUpdate<S>>,
) -> Result<TensorId> {
    match mode {
        Mode::Train => {
            let (y, stats) = g.batch_norm_train(x, layer.gamma, layer.beta)?;
            updates.push(NormUpdate { tag: layer.tag, stats });
            Ok(y)
        }
        Mode::Eval => g.batch_norm_eval(x, layer.gamma, layer.beta, &layer.running_mean, &layer.running_var),
    }
}

/// Pre-activation residual block:
/// `x + Conv3x3(ReLU(BN(Conv3x3(ReLU(BN(x))))))`.
///
/// With a projection the first convolution has stride 2 and the skip path is
/// a stride-2 1x1 convolution of `x`, halving the spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<S> {
    pub bn1: NormLayer<S>,
    pub conv1: ConvLayer,
    pub bn2: NormLayer<S>,
    pub conv2: ConvLayer,
    pub projection: Option<ConvLayer>,
}

pub fn residual_block_forward<S: Real>(
    g: &mut Graph<S>,
    x: TensorId,
    p: &BlockParams<S>,
    mode: Mode,
    updates: &mut Vec<NormUpdate<S>>,
) -> Result<TensorId> {
    let in_c = *g.shape(x).last().unwrap();
    let w_in = g.shape(p.conv1.weight)[2];
    if in_c != w_in {
        return Err(dim_err!("block expects {} input channels, got {}", w_in, in_c));
    }
    let stride = if p.projection.is_some() { 2 } else { 1 };
    let h = norm_forward(g, x, &p.bn1, mode, updates)?;
    let h = g.relu(h)?;
    let h = g.conv2d(h, p.conv1.weight, p.conv1.bias, stride, 1)?;
    let h = norm_forward(g, h, &p.bn2, mode, updates)?;
    let h = g.relu(h)?;
    let residual = g.conv2d(h, p.conv2.weight, p.conv2.bias, 1, 1)?;
    let skip = match p.projection {
        Some(proj) => g.conv2d(x, proj.weight, proj.bias, 2, 0)?,
        None => x,
    };
    g.add(skip, residual)
}

/// `Dense[ReLU] -> Dropout -> Dense[ReLU] -> Dropout -> Dense[ReLU] -> Dense[Sigmoid]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    pub layers: [DenseLayer; 4],
}

/// Runs one branch head. Dropout masks derive from `seed`.
pub fn branch_forward<S: Real>(
    g: &mut Graph<S>,
    pooled: TensorId,
    p: &HeadParams,
    dropout_p: f64,
    mode: Mode,
    seed: u64,
) -> Result<TensorId> {
    let [l0, l1, l2, l3] = p.layers;
    let h = g.dense(pooled, l0.weight, l0.bias)?;
    let h = g.relu(h)?;
    let h = g.dropout(h, dropout_p, rng::mix(seed, 0), mode)?;
    let h = g.dense(h, l1.weight, l1.bias)?;
    let h = g.relu(h)?;
    let h = g.dropout(h, dropout_p, rng::mix(seed, 1), mode)?;
    let h = g.dense(h, l2.weight, l2.bias)?;
    let h = g.relu(h)?;
    let h = g.dense(h, l3.weight, l3.bias)?;
    g.sigmoid(h)
}
