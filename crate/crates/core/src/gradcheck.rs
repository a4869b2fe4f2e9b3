//! Central finite-difference verification of the tape's gradients.
//!
//! [`check_gradients`] compares reverse-mode gradients with
//! `(L(x + h e_i) - L(x - h e_i)) / 2h` for every input coordinate.
//! Non-scalar outputs are first reduced with a fixed random projection, so
//! the whole Jacobian is exercised. [`run_suite`] applies it to every
//! primitive, the residual block, the branch head, the losses and a tiny
//! end-to-end model, each on a series of random shapes.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode, TensorId};
use crate::error::{invalid, Result};
use crate::losses;
use crate::model::layers::{self, BlockParams, ConvLayer, DenseLayer, HeadParams, NormLayer};
use crate::model::{HeadLayout, Model, ModelConfig};
use crate::policy::{Category, Task, TaskPolicy};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Random shapes per entry.
    pub cases: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, cases: 10, seed: 0x6772_6164 }
    }
}

/// Worst disagreement found by one check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub max_rel_error: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates whose `+h` / `-h` evaluations straddle a ReLU kink.
    pub skipped: usize,
}

/// Denominator floor of [`relative_error`], per unit of loss magnitude.
/// Central differences of a loss `L` carry about `1e-16 |L| / 1e-5` of
/// rounding noise, so gradients that are structurally zero (a bias feeding a
/// train-mode batch norm, say) would otherwise report noise as a large
/// relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn projected(g: &mut Graph<f64>, out: TensorId, weights: &Tensor<f64>) -> Result<TensorId> {
    if g.value(out).is_scalar() {
        return Ok(out);
    }
    let y = g.mul_constant(out, weights)?;
    g.sum(y)
}

fn projection_for(g: &Graph<f64>, out: TensorId, seed: u64) -> Tensor<f64> {
    let shape = g.shape(out).to_vec();
    let mut r = rng::rng(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).expect("shape of an existing tensor")
}

/// Checks `build` at `inputs`, all of which are recorded as variables.
/// Coordinates whose perturbation flips a ReLU input are skipped; a check
/// where that happens to more than a tenth of them is an error.
#[allow(clippy::needless_range_loop)]
pub fn check_gradients<F>(inputs: &[Tensor<f64>], step: f64, seed: u64, build: F) -> Result<Discrepancy>
where
    F: Fn(&mut Graph<f64>, &[TensorId]) -> Result<TensorId>,
{
    let mut g = Graph::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &ids)?;
    let weights = projection_for(&g, out, seed);
    let loss = projected(&mut g, out, &weights)?;
    let floor = REL_ERROR_FLOOR * g.value(loss).values()[0].abs().max(1.0);
    let grads = g.backward(loss)?;

    let pattern = g.relu_pattern();
    let eval = |vals: &[Tensor<f64>]| -> Result<(f64, bool)> {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = vals.iter().map(|t| g.variable(t.clone())).collect();
        let out = build(&mut g, &ids)?;
        let loss = projected(&mut g, out, &weights)?;
        Ok((g.value(loss).values()[0], g.relu_pattern() == pattern))
    };

    let mut worst =
        Discrepancy { max_rel_error: 0.0, input: 0, index: 0, analytic: 0.0, numeric: 0.0, checked: 0, skipped: 0 };
    let mut work = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[i]).ok_or_else(|| invalid!("input {} received no gradient", i))?.to_vec();
        for j in 0..t.len() {
            let x = t.values()[j];
            work[i].values_mut()[j] = x + step;
            let (up, same_up) = eval(&work)?;
            work[i].values_mut()[j] = x - step;
            let (down, same_down) = eval(&work)?;
            work[i].values_mut()[j] = x;
            if !(same_up && same_down) {
                worst.skipped += 1;
                continue;
            }
            worst.checked += 1;
            let numeric = (up - down) / (2.0 * step);
            let e = relative_error(analytic[j], numeric, floor);
            if !(e <= worst.max_rel_error) {
                worst = Discrepancy { max_rel_error: e, input: i, index: j, analytic: analytic[j], numeric, ..worst };
            }
        }
    }
    if worst.skipped * 10 > worst.checked + worst.skipped {
        return Err(invalid!(
            "{} of {} coordinates straddle a ReLU kink",
            worst.skipped,
            worst.checked + worst.skipped
        ));
    }
    Ok(worst)
}

/// Result of one suite entry over all of its random cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    /// Shape description of the worst case.
    pub worst_case: String,
    pub coordinates: usize,
    /// Coordinates left out because they sit on a ReLU kink.
    pub skipped: usize,
}

type Case = (Vec<Tensor<f64>>, String, Box<dyn Fn(&mut Graph<f64>, &[TensorId]) -> Result<TensorId>>);
type Generator = fn(&mut Rng) -> Result<Case>;

fn uniform(r: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).expect("positive dims")
}

/// Values bounded away from zero, so no ReLU kink sits within a step.
fn off_zero(r: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = uniform(r, shape, 0.05, 1.5);
    for v in t.values_mut() {
        if r.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn nhwc(r: &mut Rng, max_hw: usize, max_c: usize) -> Vec<usize> {
    let (h, w, c) = (r.random_range(1..=max_hw), r.random_range(1..=max_hw), r.random_range(1..=max_c));
    if r.random_bool(0.5) {
        vec![r.random_range(1..=3), h, w, c]
    } else {
        vec![h, w, c]
    }
}

fn binary(r: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_bool(0.5) as u8 as f64).collect()
}

fn label(shapes: &[&[usize]]) -> String {
    shapes.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" ")
}

fn case_add(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0), uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.add(x[0], x[1]))))
}

fn case_mul(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0), uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.mul(x[0], x[1]))))
}

fn case_square(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.mul(x[0], x[0]))))
}

fn case_scale(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    let c = uniform(r, &s, -3.0, 3.0);
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(move |g, x| g.mul_constant(x[0], &c))))
}

fn case_mask(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 5, 6);
    let mut ms = s.clone();
    *ms.last_mut().unwrap() = 1;
    let n: usize = ms.iter().product();
    let m = Tensor::new(ms.clone(), binary(r, n))?;
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s, &ms]), Box::new(move |g, x| g.mask_mul(x[0], &m, true))))
}

fn case_sum(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.sum(x[0]))))
}

fn case_conv(r: &mut Rng) -> Result<Case> {
    let k: usize = [1, 3, 5, 7][r.random_range(0..4)];
    let stride = r.random_range(1..=2);
    let padding = r.random_range(0..=k / 2);
    let (cin, cout) = (r.random_range(1..=3), r.random_range(1..=3));
    let min = k.saturating_sub(2 * padding).max(1);
    let (h, w) = (r.random_range(min..=min + 4), r.random_range(min..=min + 4));
    let xs = if r.random_bool(0.5) { vec![2, h, w, cin] } else { vec![h, w, cin] };
    let ws = vec![k, k, cin, cout];
    let bias = r.random_bool(0.7);
    let mut inputs = vec![uniform(r, &xs, -1.0, 1.0), uniform(r, &ws, -1.0, 1.0)];
    if bias {
        inputs.push(uniform(r, &[cout], -1.0, 1.0));
    }
    let name = format!("{} k{k} s{stride} p{padding} bias={bias}", label(&[&xs, &ws]));
    Ok((inputs, name, Box::new(move |g, x| g.conv2d(x[0], x[1], x.get(2).copied(), stride, padding))))
}

fn case_pool(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 5, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.global_avg_pool(x[0]))))
}

fn case_dense(r: &mut Rng) -> Result<Case> {
    let (i, o) = (r.random_range(1..=6), r.random_range(1..=6));
    let xs = if r.random_bool(0.5) { vec![r.random_range(1..=4), i] } else { vec![i] };
    let inputs = vec![uniform(r, &xs, -1.0, 1.0), uniform(r, &[i, o], -1.0, 1.0), uniform(r, &[o], -1.0, 1.0)];
    Ok((inputs, label(&[&xs, &[i, o]]), Box::new(|g, x| g.dense(x[0], x[1], x[2]))))
}

fn case_relu(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![off_zero(r, &s)], label(&[&s]), Box::new(|g, x| g.relu(x[0]))))
}

fn case_sigmoid(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -6.0, 6.0)], label(&[&s]), Box::new(|g, x| g.sigmoid(x[0]))))
}

fn norm_inputs(r: &mut Rng, min_batch: usize) -> (Vec<Tensor<f64>>, Vec<usize>) {
    let c = r.random_range(1..=4);
    let s = if r.random_bool(0.5) {
        vec![r.random_range(min_batch..=4), r.random_range(1..=3), r.random_range(1..=3), c]
    } else {
        vec![r.random_range(min_batch..=6), c]
    };
    (vec![uniform(r, &s, -2.0, 2.0), uniform(r, &[c], 0.5, 1.5), uniform(r, &[c], -1.0, 1.0)], s)
}

fn case_norm_train(r: &mut Rng) -> Result<Case> {
    let (inputs, s) = norm_inputs(r, 2);
    Ok((inputs, label(&[&s]), Box::new(|g, x| Ok(g.batch_norm_train(x[0], x[1], x[2])?.0))))
}

fn case_norm_eval(r: &mut Rng) -> Result<Case> {
    let (inputs, s) = norm_inputs(r, 1);
    let c = *s.last().unwrap();
    let (rm, rv) = (uniform(r, &[c], -1.0, 1.0), uniform(r, &[c], 0.2, 2.0));
    Ok((inputs, label(&[&s]), Box::new(move |g, x| g.batch_norm_eval(x[0], x[1], x[2], rm.values(), rv.values()))))
}

fn case_dropout(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 5);
    let (p, seed) = (r.random_range(0.1..0.8), r.random());
    Ok((
        vec![uniform(r, &s, -2.0, 2.0)],
        format!("{} p={p:.2}", label(&[&s])),
        Box::new(move |g, x| g.dropout(x[0], p, seed, Mode::Train)),
    ))
}

fn case_concat(r: &mut Rng) -> Result<Case> {
    let rows = r.random_range(1..=3);
    let parts = r.random_range(1..=4);
    let shapes: Vec<Vec<usize>> = (0..parts).map(|_| vec![rows, r.random_range(1..=4)]).collect();
    let inputs = shapes.iter().map(|s| uniform(r, s, -2.0, 2.0)).collect();
    let name = label(&shapes.iter().map(|s| s.as_slice()).collect::<Vec<_>>());
    Ok((inputs, name, Box::new(|g, x| g.concat_last(x))))
}

fn case_slice(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 3, 6);
    let c = *s.last().unwrap();
    let start = r.random_range(0..c);
    let len = r.random_range(1..=c - start);
    Ok((
        vec![uniform(r, &s, -2.0, 2.0)],
        format!("{} [{start}+{len}]", label(&[&s])),
        Box::new(move |g, x| g.slice_last(x[0], start, len)),
    ))
}

fn tanh(v: f64) -> f64 {
    libm::tanh(v)
}
fn tanh_grad(v: f64) -> f64 {
    let t = libm::tanh(v);
    1.0 - t * t
}

fn case_pointwise(r: &mut Rng) -> Result<Case> {
    let s = nhwc(r, 4, 4);
    Ok((vec![uniform(r, &s, -2.0, 2.0)], label(&[&s]), Box::new(|g, x| g.pointwise(x[0], tanh, tanh_grad))))
}

fn norm_layer(ids: &[TensorId], rm: &Tensor<f64>, rv: &Tensor<f64>) -> NormLayer<f64> {
    NormLayer {
        gamma: ids[0],
        beta: ids[1],
        running_mean: rm.values().to_vec(),
        running_var: rv.values().to_vec(),
        tag: 0,
    }
}

fn case_block(r: &mut Rng) -> Result<Case> {
    let project = r.random_bool(0.5);
    let mode = if r.random_bool(0.5) { Mode::Train } else { Mode::Eval };
    let cin = r.random_range(1..=3);
    let cout = if project { r.random_range(1..=3) } else { cin };
    let (h, w) = (r.random_range(2..=5), r.random_range(2..=5));
    let xs = vec![2, h, w, cin];
    let mut inputs = vec![
        uniform(r, &xs, -1.0, 1.0),
        uniform(r, &[cin], 0.5, 1.5),
        uniform(r, &[cin], -0.5, 0.5),
        uniform(r, &[3, 3, cin, cout], -0.5, 0.5),
        uniform(r, &[cout], -0.5, 0.5),
        uniform(r, &[cout], 0.5, 1.5),
        uniform(r, &[cout], -0.5, 0.5),
        uniform(r, &[3, 3, cout, cout], -0.5, 0.5),
        uniform(r, &[cout], -0.5, 0.5),
    ];
    if project {
        inputs.push(uniform(r, &[1, 1, cin, cout], -0.5, 0.5));
        inputs.push(uniform(r, &[cout], -0.5, 0.5));
    }
    let stats = [
        uniform(r, &[cin], -0.3, 0.3),
        uniform(r, &[cin], 0.5, 1.5),
        uniform(r, &[cout], -0.3, 0.3),
        uniform(r, &[cout], 0.5, 1.5),
    ];
    let name = format!("{} -> {cout} {mode:?} projection={project}", label(&[&xs]));
    Ok((
        inputs,
        name,
        Box::new(move |g, x| {
            let p = BlockParams {
                bn1: norm_layer(&x[1..3], &stats[0], &stats[1]),
                conv1: ConvLayer { weight: x[3], bias: Some(x[4]) },
                bn2: norm_layer(&x[5..7], &stats[2], &stats[3]),
                conv2: ConvLayer { weight: x[7], bias: Some(x[8]) },
                projection: project.then(|| ConvLayer { weight: x[9], bias: Some(x[10]) }),
            };
            layers::residual_block_forward(g, x[0], &p, mode, &mut Vec::new())
        }),
    ))
}

fn case_head(r: &mut Rng) -> Result<Case> {
    let n = r.random_range(1..=3);
    let dims: Vec<usize> = (0..5).map(|_| r.random_range(1..=5)).collect();
    let mut inputs = vec![uniform(r, &[n, dims[0]], -1.0, 1.0)];
    for l in 0..4 {
        inputs.push(uniform(r, &[dims[l], dims[l + 1]], -1.0, 1.0));
        inputs.push(uniform(r, &[dims[l + 1]], -0.5, 0.5));
    }
    let (p, seed) = (r.random_range(0.0..0.8), r.random());
    Ok((
        inputs,
        format!("n{n} widths {dims:?} p={p:.2}"),
        Box::new(move |g, x| {
            let d = |i: usize| DenseLayer { weight: x[1 + 2 * i], bias: x[2 + 2 * i] };
            let head = HeadParams { layers: [d(0), d(1), d(2), d(3)] };
            layers::branch_forward(g, x[0], &head, p, Mode::Train, seed)
        }),
    ))
}

fn random_policy(r: &mut Rng) -> TaskPolicy {
    let names = ["a", "b", "c", "d", "e"];
    let tasks = (0..r.random_range(1..=3))
        .map(|t| {
            let cats =
                (0..r.random_range(1..=2)).map(|c| Category::new(names[c], &names[..r.random_range(1..=4)])).collect();
            Task::new(names[t], cats)
        })
        .collect();
    TaskPolicy::new("random", tasks).expect("names are unique per scope")
}

/// Loss on sigmoid outputs of random logits, for each loss kind.
fn loss_case(r: &mut Rng, kind: losses::LossKind) -> Result<Case> {
    let policy = random_policy(r);
    let (n, a) = (r.random_range(1..=4), policy.attribute_count());
    let targets = binary(r, n * a);
    let gamma = r.random_range(0.5..3.0);
    let ratios: Vec<f64> = (0..a).map(|_| r.random_range(0.05..0.95)).collect();
    let cfg = losses::LossConfig { kind, focal_gamma: gamma };
    Ok((
        vec![uniform(r, &[n, a], -3.0, 3.0)],
        format!("[{n}, {a}] gamma={gamma:.2}"),
        Box::new(move |g, x| {
            let p = g.sigmoid(x[0])?;
            cfg.apply(g, p, &targets, &policy, Some(&ratios))
        }),
    ))
}

fn case_weighted(r: &mut Rng) -> Result<Case> {
    loss_case(r, losses::LossKind::WeightedBce)
}
fn case_weighted_focal(r: &mut Rng) -> Result<Case> {
    loss_case(r, losses::LossKind::WeightedFocal)
}
fn case_plain(r: &mut Rng) -> Result<Case> {
    loss_case(r, losses::LossKind::PlainBce)
}
fn case_focal(r: &mut Rng) -> Result<Case> {
    loss_case(r, losses::LossKind::Focal)
}
fn case_baseline(r: &mut Rng) -> Result<Case> {
    loss_case(r, losses::LossKind::BaselineWeightedBce)
}

/// A tiny model end to end: every parameter, train-mode batch norm and
/// dropout, masking and the weighted loss.
fn case_model(r: &mut Rng) -> Result<Case> {
    let config = ModelConfig {
        input_size: 8,
        stem_channels: 2,
        stem_kernel: 3,
        stages: 2,
        blocks_per_stage: r.random_range(1..=2),
        stage_channels: vec![2, 3],
        branch_widths: vec![3, 3, 2],
        dropout_p: 0.3,
        head_layout: if r.random_bool(0.7) { HeadLayout::PerTask } else { HeadLayout::Shared },
        multiplication_layer: r.random_bool(0.7),
    };
    let policy = random_policy(r);
    let n = 2;
    let mut model: Model<f64> = Model::new(config.clone(), policy.clone(), r.random())?;
    for p in model.params_mut().entries_mut() {
        if p.kind == crate::model::ParamKind::Bias || p.kind == crate::model::ParamKind::Shift {
            let shape = p.tensor.shape().to_vec();
            p.tensor = uniform(r, &shape, -0.3, 0.3);
        }
    }
    let images = uniform(r, &[n, 8, 8, 3], 0.0, 1.0);
    let mut mvals = binary(r, n * 4);
    mvals[0] = 1.0;
    let masks = Tensor::new(vec![n, 2, 2, 1], mvals)?;
    let targets = binary(r, n * policy.attribute_count());
    let seed = r.random();
    let inputs: Vec<Tensor<f64>> = model.params().entries().iter().map(|p| p.tensor.clone()).collect();
    let name = format!(
        "{} blocks, {:?}, mask={}, A={}",
        config.blocks_per_stage,
        config.head_layout,
        config.multiplication_layer,
        policy.attribute_count()
    );
    Ok((
        inputs,
        name,
        Box::new(move |g, x| {
            let b = crate::model::Bindings { ids: x.to_vec() };
            let img = g.input(images.clone());
            let mut updates = Vec::new();
            let f = model.backbone_forward(g, &b, img, Mode::Train, &mut updates)?;
            let (_, _, _, probs) = model.forward_from_features(g, &b, f, &masks, Mode::Train, seed)?;
            losses::weighted_loss(g, probs, &targets, &policy)
        }),
    ))
}

/// Every suite entry: name and case generator.
pub fn suite() -> Vec<(&'static str, Generator)> {
    vec![
        ("add", case_add as Generator),
        ("mul", case_mul),
        ("mul_self", case_square),
        ("mul_constant", case_scale),
        ("mask_mul", case_mask),
        ("sum", case_sum),
        ("conv2d", case_conv),
        ("global_avg_pool", case_pool),
        ("dense", case_dense),
        ("relu", case_relu),
        ("sigmoid", case_sigmoid),
        ("batch_norm_train", case_norm_train),
        ("batch_norm_eval", case_norm_eval),
        ("dropout", case_dropout),
        ("concat_last", case_concat),
        ("slice_last", case_slice),
        ("pointwise", case_pointwise),
        ("residual_block", case_block),
        ("branch_head", case_head),
        ("loss/weighted_bce", case_weighted),
        ("loss/weighted_focal", case_weighted_focal),
        ("loss/plain_bce", case_plain),
        ("loss/focal", case_focal),
        ("loss/baseline_weighted_bce", case_baseline),
        ("model", case_model),
    ]
}

/// Runs one entry over `config.cases` random cases.
pub fn run_entry(name: &str, generate: Generator, config: &CheckConfig) -> Result<CheckOutcome> {
    let mut r = rng::rng(rng::mix(config.seed, rng::fnv1a(name.as_bytes())));
    let mut worst = (0.0f64, String::new());
    let (mut coordinates, mut skipped) = (0, 0);
    for _ in 0..config.cases {
        let (inputs, shape, build) = generate(&mut r)?;
        let d = check_gradients(&inputs, config.step, r.random(), build)?;
        coordinates += d.checked;
        skipped += d.skipped;
        if !(d.max_rel_error <= worst.0) {
            worst = (d.max_rel_error, shape);
        }
    }
    Ok(CheckOutcome {
        name: name.into(),
        cases: config.cases,
        max_rel_error: worst.0,
        passed: worst.0 < config.tolerance,
        worst_case: worst.1,
        coordinates,
        skipped,
    })
}

pub fn run_suite(config: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    suite().into_iter().map(|(name, generate)| run_entry(name, generate, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubled_grad(v: f64) -> f64 {
        2.0 * tanh_grad(v)
    }

    #[test]
    fn detects_a_wrong_derivative() {
        let mut r = rng::rng(3);
        let x = uniform(&mut r, &[3, 4], -1.0, 1.0);
        let good =
            check_gradients(core::slice::from_ref(&x), 1e-5, 1, |g, x| g.pointwise(x[0], tanh, tanh_grad)).unwrap();
        assert!(good.max_rel_error < 1e-6);
        let bad = check_gradients(&[x], 1e-5, 1, |g, x| g.pointwise(x[0], tanh, doubled_grad)).unwrap();
        assert!(bad.max_rel_error > 0.3);
    }

    #[test]
    fn relative_error_floor() {
        let f = REL_ERROR_FLOOR;
        assert_eq!(relative_error(0.0, 0.0, f), 0.0);
        assert_eq!(relative_error(1.0, 0.5, f), 0.5);
        assert!((relative_error(1e-9, 2e-9, f) - 1e-3).abs() < 1e-12);
        assert!((relative_error(1e-3, 2e-3, f) - 0.5).abs() < 1e-12);
    }
}
