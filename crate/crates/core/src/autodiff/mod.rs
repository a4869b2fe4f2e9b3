//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a Wengert tape: every operation appends a node holding its
//! output value and the rule needed to push gradients back to its inputs.
//! Nodes are immutable once recorded. [`Graph::backward`] walks the tape in
//! exact reverse order of execution.
//!
//! Leaves come in two flavours: [`Graph::input`] for constants and
//! [`Graph::variable`] for values that need gradients. Masks passed to
//! [`Graph::mask_mul`] are never nodes, so no gradient can reach them.

pub(crate) mod kernels;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{dim_err, invalid, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::{Nhwc, Tensor};
use kernels::ConvGeom;

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train or eval behaviour for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Batch statistics computed by a train-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
    /// Number of values reduced per channel.
    pub count: usize,
}

/// Per-element coefficients of a binary cross-entropy style loss.
///
/// The recorded scalar is
/// `-sum_i pos[i]*y[i]*(1-p)^g*ln(p) + neg[i]*(1-y[i])*p^g*ln(1-p)`
/// with `p` clamped to `[eps, 1-eps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLossTerms<S> {
    pub targets: Vec<S>,
    pub pos_weight: Vec<S>,
    pub neg_weight: Vec<S>,
    pub gamma: S,
    pub eps: S,
}

enum Op<S> {
    Leaf,
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    /// Multiplication by a constant array of the same length.
    Scale(TensorId, Vec<S>),
    Sum(TensorId),
    Conv {
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
        geom: ConvGeom,
    },
    AvgPool {
        x: TensorId,
        geom: Nhwc,
    },
    Dense {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        rows: usize,
        inp: usize,
        outp: usize,
    },
    Relu(TensorId),
    Sigmoid(TensorId),
    /// Per-channel normalization; `xhat` and `inv_std` are saved from forward.
    /// `batch` is true when the statistics came from the input itself.
    Norm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        batch: bool,
    },
    Concat {
        parts: Vec<TensorId>,
        widths: Vec<usize>,
    },
    Slice {
        x: TensorId,
        start: usize,
        len: usize,
        width: usize,
    },
    BinaryLoss {
        p: TensorId,
        terms: BinaryLossTerms<S>,
    },
    Pointwise {
        x: TensorId,
        derivative: fn(S) -> S,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Gradient tape.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    backward_done: bool,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    order: Vec<TensorId>,
    detached: bool,
}

impl<S: Real> Gradients<S> {
    /// Gradient of the loss with respect to node `id`, if it requires one.
    pub fn get(&self, id: TensorId) -> Option<&[S]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Nodes whose backward rule ran, in visiting order.
    pub fn order(&self) -> &[TensorId] {
        &self.order
    }

    /// True when the loss did not depend on any variable.
    pub fn is_detached(&self) -> bool {
        self.detached
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> TensorId {
        self.nodes.push(Node { value, op, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn check(&self, id: TensorId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(invalid!("tensor id {} does not belong to this graph", id.0))
        }
    }

    /// Records a constant leaf.
    pub fn input(&mut self, t: Tensor<S>) -> TensorId {
        self.push(t, Op::Leaf, false)
    }

    /// Records a leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor<S>) -> TensorId {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.rg(id)
    }

    fn same_shape(&self, a: TensorId, b: TensorId) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!("shape mismatch {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let values = va.values().iter().zip(vb.values()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), values)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let values = va.values().iter().zip(vb.values()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(va.shape().to_vec(), values)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Multiplies `x` elementwise by a constant tensor of identical shape.
    pub fn mul_constant(&mut self, x: TensorId, c: &Tensor<S>) -> Result<TensorId> {
        self.check(x)?;
        if self.shape(x) != c.shape() {
            return Err(dim_err!("constant shape {:?} does not match {:?}", c.shape(), self.shape(x)));
        }
        Ok(self.scale(x, c.values().to_vec()))
    }

    fn scale(&mut self, x: TensorId, factors: Vec<S>) -> TensorId {
        let v = self.value(x);
        let values = v.values().iter().zip(&factors).map(|(&a, &f)| a * f).collect();
        let t = Tensor::new(v.shape().to_vec(), values).expect("same length");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, factors), rg)
    }

    /// Hard-attention gating `f * m`.
    ///
    /// `f` is `[H, W, D]` or `[N, H, W, D]`; `m` has the same leading
    /// dimensions and either `D` channels or a single channel that is
    /// broadcast across all `D`. The mask is a constant: gradients flow to
    /// `f` only, and are exactly zero where `m == 0`. With `strict` set, a
    /// mask holding anything other than 0 or 1 is rejected.
    pub fn mask_mul(&mut self, f: TensorId, m: &Tensor<S>, strict: bool) -> Result<TensorId> {
        self.check(f)?;
        let fg = Nhwc::of(self.shape(f))?;
        let mg = Nhwc::of(m.shape())?;
        if fg.batched != mg.batched || fg.n != mg.n || fg.h != mg.h || fg.w != mg.w {
            return Err(dim_err!("mask {:?} does not match feature map {:?}", m.shape(), self.shape(f)));
        }
        if mg.c != 1 && mg.c != fg.c {
            return Err(dim_err!("mask has {} channels, features have {}", mg.c, fg.c));
        }
        if strict {
            m.ensure_binary()?;
        }
        let factors = if mg.c == fg.c {
            m.values().to_vec()
        } else {
            m.values().iter().flat_map(|&v| core::iter::repeat_n(v, fg.c)).collect()
        };
        Ok(self.scale(f, factors))
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        self.check(x)?;
        let s = self.value(x).values().iter().copied().sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    /// Cross-correlation of a channels-last input with a `[k, k, Cin, Cout]`
    /// kernel. Output spatial size is `floor((H + 2p - k) / stride) + 1`.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        self.check(x)?;
        self.check(w)?;
        let input = Nhwc::of(self.shape(x))?;
        let &[k, k2, cin, cout] = self.shape(w) else {
            return Err(dim_err!("kernel must be [k, k, Cin, Cout], got {:?}", self.shape(w)));
        };
        if k != k2 || k == 0 {
            return Err(dim_err!("kernel must be square, got {}x{}", k, k2));
        }
        if cin != input.c {
            return Err(dim_err!("kernel expects {} input channels, input has {}", cin, input.c));
        }
        if stride == 0 {
            return Err(invalid!("stride must be positive"));
        }
        if let Some(b) = b {
            self.check(b)?;
            if self.shape(b) != [cout] {
                return Err(dim_err!("bias must be [{}], got {:?}", cout, self.shape(b)));
            }
        }
        let (ph, pw) = (input.h + 2 * padding, input.w + 2 * padding);
        if k > ph || k > pw {
            return Err(dim_err!("kernel {} larger than padded input {}x{}", k, ph, pw));
        }
        let geom =
            ConvGeom { input, out_h: (ph - k) / stride + 1, out_w: (pw - k) / stride + 1, k, cout, stride, padding };
        let out_geom = geom.output();
        let mut out = vec![S::zero(); out_geom.len()];
        kernels::conv_forward(
            &geom,
            self.value(x).values(),
            self.value(w).values(),
            b.map(|b| self.value(b).values()),
            &mut out,
        );
        let t = Tensor::new(out_geom.shape(), out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(t, Op::Conv { x, w, b, geom }, rg))
    }

    /// Spatial mean per channel: `[N, H, W, C] -> [N, C]`, `[H, W, C] -> [C]`.
    pub fn global_avg_pool(&mut self, x: TensorId) -> Result<TensorId> {
        self.check(x)?;
        let geom = Nhwc::of(self.shape(x))?;
        let hw = geom.h * geom.w;
        let inv = S::one() / S::of(hw as f64);
        let mut out = vec![S::zero(); geom.n * geom.c];
        for (b, img) in self.value(x).values().chunks_exact(hw * geom.c).enumerate() {
            let acc = &mut out[b * geom.c..(b + 1) * geom.c];
            for px in img.chunks_exact(geom.c) {
                for (a, &v) in acc.iter_mut().zip(px) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        let shape = if geom.batched { vec![geom.n, geom.c] } else { vec![geom.c] };
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::AvgPool { x, geom }, rg))
    }

    /// Affine layer `x W + b` with `x: [N, in]` or `[in]`, `W: [in, out]`, `b: [out]`.
    pub fn dense(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let (rows, inp, batched) = match *self.shape(x) {
            [i] => (1, i, false),
            [n, i] => (n, i, true),
            ref s => return Err(dim_err!("dense input must be rank 1 or 2, got {:?}", s)),
        };
        let &[wi, outp] = self.shape(w) else {
            return Err(dim_err!("dense weights must be [in, out], got {:?}", self.shape(w)));
        };
        if wi != inp {
            return Err(dim_err!("dense weights expect {} inputs, got {}", wi, inp));
        }
        if self.shape(b) != [outp] {
            return Err(dim_err!("dense bias must be [{}], got {:?}", outp, self.shape(b)));
        }
        let mut out = vec![S::zero(); rows * outp];
        kernels::dense_forward(
            self.value(x).values(),
            self.value(w).values(),
            self.value(b).values(),
            rows,
            inp,
            outp,
            &mut out,
        );
        let shape = if batched { vec![rows, outp] } else { vec![outp] };
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(t, Op::Dense { x, w, b, rows, inp, outp }, rg))
    }

    pub fn activation(&mut self, x: TensorId, kind: Activation) -> Result<TensorId> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.check(x)?;
        let t = self.value(x).map(|v| if v > S::zero() { v } else { S::zero() });
        let rg = self.rg(x);
        Ok(self.push(t, Op::Relu(x), rg))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        self.check(x)?;
        let t = self.value(x).map(kernels::sigmoid);
        let rg = self.rg(x);
        Ok(self.push(t, Op::Sigmoid(x), rg))
    }

    fn norm_params(&self, x: TensorId, gamma: TensorId, beta: TensorId) -> Result<usize> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let shape = self.shape(x);
        if shape.len() < 2 {
            return Err(dim_err!("batch norm needs a [batch, ..., C] input, got {:?}", shape));
        }
        let c = *shape.last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err!("batch norm scale/shift must be [{}]", c));
        }
        Ok(c)
    }

    /// Train-mode batch norm over every axis but the last, using the batch's
    /// own mean and biased variance. The returned statistics feed the
    /// running averages kept by the caller.
    pub fn batch_norm_train(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
    ) -> Result<(TensorId, BatchStats<S>)> {
        let c = self.norm_params(x, gamma, beta)?;
        if self.shape(x)[0] < 2 {
            return Err(invalid!("train-mode batch norm needs a batch of at least 2"));
        }
        let xv = self.value(x).values();
        let (mean, var) = kernels::channel_moments(xv, c);
        let eps = S::of(BN_EPS);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let (xhat, out) = self.normalize(x, gamma, beta, &mean, &inv_std);
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let id = self.push(t, Op::Norm { x, gamma, beta, xhat, inv_std, batch: true }, rg);
        let count = self.value(x).len() / c;
        Ok((id, BatchStats { mean, var, count }))
    }

    /// Eval-mode batch norm using fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        running_mean: &[S],
        running_var: &[S],
    ) -> Result<TensorId> {
        let c = self.norm_params(x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(dim_err!("running statistics must have {} channels", c));
        }
        let eps = S::of(BN_EPS);
        let inv_std: Vec<S> = running_var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let (xhat, out) = self.normalize(x, gamma, beta, running_mean, &inv_std);
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(t, Op::Norm { x, gamma, beta, xhat, inv_std, batch: false }, rg))
    }

    fn normalize(&self, x: TensorId, gamma: TensorId, beta: TensorId, mean: &[S], inv_std: &[S]) -> (Vec<S>, Vec<S>) {
        let c = mean.len();
        let (g, b) = (self.value(gamma).values(), self.value(beta).values());
        let xv = self.value(x).values();
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.chunks_exact(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        (xhat, out)
    }

    /// Inverted dropout. In train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; the mask is
    /// a pure function of `seed`. Eval mode, or `p == 0`, is the identity.
    pub fn dropout(&mut self, x: TensorId, p: f64, seed: u64, mode: Mode) -> Result<TensorId> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(invalid!("dropout probability {} outside [0, 1)", p));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mut r = rng::rng(seed);
        let keep = S::of(1.0 / (1.0 - p));
        let factors = (0..self.value(x).len()).map(|_| if r.random::<f64>() < p { S::zero() } else { keep }).collect();
        Ok(self.scale(x, factors))
    }

    /// Concatenates tensors along their last axis.
    pub fn concat_last(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let first = *parts.first().ok_or_else(|| invalid!("nothing to concatenate"))?;
        for &p in parts {
            self.check(p)?;
        }
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(dim_err!("cannot concatenate {:?} with {:?}", self.shape(first), s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows = self.value(first).len() / widths[0];
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).values()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::new(shape, out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(t, Op::Concat { parts: parts.to_vec(), widths }, rg))
    }

    /// Takes `len` entries starting at `start` along the last axis.
    pub fn slice_last(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        if len == 0 || start + len > width {
            return Err(dim_err!("slice {}..{} outside last axis of {}", start, start + len, width));
        }
        let out: Vec<S> = self
            .value(x)
            .values()
            .chunks_exact(width)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let t = Tensor::new(out_shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Slice { x, start, len, width }, rg))
    }

    /// Scalar binary cross-entropy family loss over `p`; see [`BinaryLossTerms`].
    pub fn binary_loss(&mut self, p: TensorId, terms: BinaryLossTerms<S>) -> Result<TensorId> {
        self.check(p)?;
        let n = self.value(p).len();
        if terms.targets.len() != n || terms.pos_weight.len() != n || terms.neg_weight.len() != n {
            return Err(dim_err!("loss terms must have {} entries", n));
        }
        let (lo, hi) = (terms.eps, S::one() - terms.eps);
        let g = terms.gamma;
        let mut total = S::zero();
        for (i, &pv) in self.value(p).values().iter().enumerate() {
            let q = pv.max(lo).min(hi);
            let y = terms.targets[i];
            let pos = terms.pos_weight[i] * y * (S::one() - q).powf(g) * q.ln();
            let neg = terms.neg_weight[i] * (S::one() - y) * q.powf(g) * (S::one() - q).ln();
            total -= pos + neg;
        }
        let rg = self.rg(p);
        Ok(self.push(Tensor::scalar(total), Op::BinaryLoss { p, terms }, rg))
    }

    /// Applies `f` elementwise with a caller-supplied derivative `df`, which
    /// is evaluated at the input. Used to plug ad-hoc functions (and
    /// deliberately wrong rules, for testing the checker) into the tape.
    pub fn pointwise(&mut self, x: TensorId, f: fn(S) -> S, df: fn(S) -> S) -> Result<TensorId> {
        self.check(x)?;
        let t = self.value(x).map(f);
        let rg = self.rg(x);
        Ok(self.push(t, Op::Pointwise { x, derivative: df }, rg))
    }

    /// Which inputs of every recorded ReLU are positive, in tape order. Two
    /// evaluations with different patterns straddle a kink, where finite
    /// differences say nothing about the derivative.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.nodes[x.0].value.values().iter().map(|&v| v > S::zero()));
            }
        }
        out
    }

    /// Allows another [`Graph::backward`] on the same tape.
    pub fn reset_backward(&mut self) {
        self.backward_done = false;
    }

    /// Backpropagates from the scalar `loss`.
    ///
    /// Every variable reachable from the loss gets its gradient; variables
    /// that are recorded but unreachable get an all-zero gradient. A loss
    /// that depends on no variable yields an empty, detached gradient map.
    pub fn backward(&mut self, loss: TensorId) -> Result<Gradients<S>> {
        self.check(loss)?;
        if !self.value(loss).is_scalar() {
            return Err(invalid!("loss must be scalar, got shape {:?}", self.shape(loss)));
        }
        if self.backward_done {
            return Err(invalid!("backward already ran on this tape; call reset_backward first"));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            log::warn!("loss is detached from every variable; no gradients produced");
            return Ok(Gradients { grads, order: Vec::new(), detached: true });
        }
        grads[loss.0] = Some(vec![S::one()]);
        let mut order = Vec::new();
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            order.push(TensorId(i));
            for (id, contrib) in self.backprop_node(i, &g) {
                match &mut grads[id.0] {
                    Some(acc) => add_into(acc, &contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![S::zero(); node.value.len()]);
            }
        }
        Ok(Gradients { grads, order, detached: false })
    }

    /// Gradient contributions of node `i` to each of its inputs that needs one.
    fn backprop_node(&self, i: usize, g: &[S]) -> Vec<(TensorId, Vec<S>)> {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut out: Vec<(TensorId, Vec<S>)> = Vec::new();
        let want = |id: TensorId| nodes[id.0].requires_grad;
        let zeros = |id: TensorId| vec![S::zero(); nodes[id.0].value.len()];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if want(id) {
                        out.push((id, g.to_vec()));
                    }
                }
            }
            Op::Mul(a, b) => {
                for (id, other) in [(*a, *b), (*b, *a)] {
                    if want(id) {
                        let o = nodes[other.0].value.values();
                        out.push((id, g.iter().zip(o).map(|(&gv, &ov)| gv * ov).collect()));
                    }
                }
            }
            Op::Scale(x, f) => {
                if want(*x) {
                    out.push((*x, g.iter().zip(f).map(|(&gv, &fv)| gv * fv).collect()));
                }
            }
            Op::Sum(x) => {
                if want(*x) {
                    out.push((*x, vec![g[0]; nodes[x.0].value.len()]));
                }
            }
            Op::Conv { x, w, b, geom } => {
                let mut gx = want(*x).then(|| zeros(*x));
                let mut gw = want(*w).then(|| zeros(*w));
                let mut gb = b.filter(|&b| want(b)).map(zeros);
                kernels::conv_backward(
                    geom,
                    nodes[x.0].value.values(),
                    nodes[w.0].value.values(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                out.extend(gx.map(|v| (*x, v)));
                out.extend(gw.map(|v| (*w, v)));
                out.extend(gb.map(|v| (b.unwrap(), v)));
            }
            Op::AvgPool { x, geom } => {
                if want(*x) {
                    let hw = geom.h * geom.w;
                    let inv = S::one() / S::of(hw as f64);
                    let mut gx = zeros(*x);
                    for (b, img) in gx.chunks_exact_mut(hw * geom.c).enumerate() {
                        let gb = &g[b * geom.c..(b + 1) * geom.c];
                        for px in img.chunks_exact_mut(geom.c) {
                            for (d, &gv) in px.iter_mut().zip(gb) {
                                *d = gv * inv;
                            }
                        }
                    }
                    out.push((*x, gx));
                }
            }
            Op::Dense { x, w, b, rows, inp, outp } => {
                let mut gx = want(*x).then(|| zeros(*x));
                let mut gw = want(*w).then(|| zeros(*w));
                let mut gb = want(*b).then(|| zeros(*b));
                kernels::dense_backward(
                    nodes[x.0].value.values(),
                    nodes[w.0].value.values(),
                    g,
                    *rows,
                    *inp,
                    *outp,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                out.extend(gx.map(|v| (*x, v)));
                out.extend(gw.map(|v| (*w, v)));
                out.extend(gb.map(|v| (*b, v)));
            }
            Op::Relu(x) => {
                if want(*x) {
                    let xv = nodes[x.0].value.values();
                    out.push((
                        *x,
                        g.iter().zip(xv).map(|(&gv, &v)| if v > S::zero() { gv } else { S::zero() }).collect(),
                    ));
                }
            }
            Op::Sigmoid(x) => {
                if want(*x) {
                    let y = node.value.values();
                    out.push((*x, g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (S::one() - yv)).collect()));
                }
            }
            Op::Norm { x, gamma, beta, xhat, inv_std, batch } => {
                let c = inv_std.len();
                let m = S::of((xhat.len() / c) as f64);
                let mut sum_g = vec![S::zero(); c];
                let mut sum_gx = vec![S::zero(); c];
                for (gr, hr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for j in 0..c {
                        sum_g[j] += gr[j];
                        sum_gx[j] += gr[j] * hr[j];
                    }
                }
                if want(*x) {
                    let gam = nodes[gamma.0].value.values();
                    let mut gx = Vec::with_capacity(g.len());
                    for (gr, hr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            let k = gam[j] * inv_std[j];
                            gx.push(if *batch {
                                k * (gr[j] - sum_g[j] / m - hr[j] * sum_gx[j] / m)
                            } else {
                                k * gr[j]
                            });
                        }
                    }
                    out.push((*x, gx));
                }
                if want(*gamma) {
                    out.push((*gamma, sum_gx));
                }
                if want(*beta) {
                    out.push((*beta, sum_g));
                }
            }
            Op::Concat { parts, widths } => {
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(widths) {
                    if want(p) {
                        let gp = g.chunks_exact(total).flat_map(|row| row[off..off + w].iter().copied()).collect();
                        out.push((p, gp));
                    }
                    off += w;
                }
            }
            Op::Slice { x, start, len, width } => {
                if want(*x) {
                    let mut gx = zeros(*x);
                    for (row, gr) in gx.chunks_exact_mut(*width).zip(g.chunks_exact(*len)) {
                        row[*start..start + len].copy_from_slice(gr);
                    }
                    out.push((*x, gx));
                }
            }
            Op::BinaryLoss { p, terms } => {
                if want(*p) {
                    let (lo, hi) = (terms.eps, S::one() - terms.eps);
                    let gam = terms.gamma;
                    let one = S::one();
                    let mut gp = zeros(*p);
                    for (i, (d, &pv)) in gp.iter_mut().zip(nodes[p.0].value.values()).enumerate() {
                        // the clamp has zero slope outside (eps, 1 - eps)
                        if !(pv > lo && pv < hi) {
                            continue;
                        }
                        let y = terms.targets[i];
                        let q = one - pv;
                        // d/dp of (1-p)^g ln p and p^g ln(1-p)
                        let mut dpos = q.powf(gam) / pv;
                        let mut dneg = -pv.powf(gam) / q;
                        if gam != S::zero() {
                            dpos -= gam * q.powf(gam - one) * pv.ln();
                            dneg += gam * pv.powf(gam - one) * q.ln();
                        }
                        *d = -g[0] * (terms.pos_weight[i] * y * dpos + terms.neg_weight[i] * (one - y) * dneg);
                    }
                    out.push((*p, gp));
                }
            }
            Op::Pointwise { x, derivative } => {
                if want(*x) {
                    let xv = nodes[x.0].value.values();
                    out.push((*x, g.iter().zip(xv).map(|(&gv, &v)| gv * derivative(v)).collect()));
                }
            }
        }
        out
    }
}

fn add_into<S: Real>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests;
