use super::*;
use crate::policy::{Category, Task};
use crate::Error;

fn policy() -> TaskPolicy {
    TaskPolicy::new(
        "t",
        vec![
            Task::new("Body", vec![Category::new("Build", &["Thin", "Fat"])]),
            Task::new("Head", vec![Category::new("Hat", &["Hat"]), Category::new("Hair", &["Long", "Short", "Bald"])]),
        ],
    )
    .unwrap()
}

fn images(n: usize, s: usize, seed: u64) -> Tensor<f64> {
    let mut state = seed;
    let v = (0..n * s * s * 3)
        .map(|_| {
            state = rng::mix(state, 1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Tensor::new(vec![n, s, s, 3], v).unwrap()
}

fn masks(n: usize, g: usize) -> Tensor<f64> {
    let v = (0..n * g * g).map(|i| ((i * 7 + 3) % 5 != 0) as u8 as f64).collect();
    Tensor::new(vec![n, g, g, 1], v).unwrap()
}

#[test]
fn parameter_names_follow_layout() {
    let m: Model<f32> = Model::new(ModelConfig::desk_light(), policy(), 1).unwrap();
    let p = m.params();
    assert_eq!(p.get("stem.conv.weight").unwrap().tensor.shape(), &[3, 3, 3, 8]);
    assert_eq!(p.get("stage1.block0.proj.weight").unwrap().tensor.shape(), &[1, 1, 8, 16]);
    assert_eq!(p.get("final_bn.running_var").unwrap().tensor.values(), &[1.0; 16]);
    assert_eq!(p.get("head.Head.dense3.weight").unwrap().tensor.shape(), &[16, 4]);
    assert!(p.get("head.shared.dense0.weight").is_none());
    let shared = ModelConfig { head_layout: HeadLayout::Shared, ..ModelConfig::desk_light() };
    let s: Model<f32> = Model::new(shared, policy(), 1).unwrap();
    assert_eq!(s.params().get("head.shared.dense3.bias").unwrap().tensor.shape(), &[6]);
}

#[test]
fn forward_shapes_and_range() {
    let m: Model<f64> = Model::new(ModelConfig::desk_light(), policy(), 2).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let mut g = Graph::new();
        let pass = m.forward(&mut g, &images(2, 32, 3), &masks(2, 4), mode, 9).unwrap();
        assert_eq!(g.shape(pass.features), &[2, 4, 4, 16]);
        assert_eq!(g.shape(pass.pooled), &[2, 16]);
        assert_eq!(g.shape(pass.probs), &[2, 5 + 1]);
        assert_eq!(pass.head_outputs.len(), 2);
        assert!(g.value(pass.probs).values().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(pass.norm_updates.is_empty(), mode == Mode::Eval);
    }
}

#[test]
fn masked_cells_do_not_reach_the_heads() {
    let m: Model<f64> = Model::new(ModelConfig::desk_light(), policy(), 4).unwrap();
    let mk = masks(2, 4);
    let mut g = Graph::new();
    let pass = m.forward(&mut g, &images(2, 32, 5), &mk, Mode::Eval, 0).unwrap();
    let base = g.value(pass.probs).clone();
    let mut f = g.value(pass.features).clone();
    for (v, keep) in f.values_mut().iter_mut().zip(mk.values().iter().flat_map(|&k| core::iter::repeat_n(k, 16))) {
        if keep == 0.0 {
            *v += 1000.0;
        }
    }
    let fid = g.input(f);
    let (_, _, _, probs) = m.forward_from_features(&mut g, &pass.bindings, fid, &mk, Mode::Eval, 0).unwrap();
    assert_eq!(g.value(probs), &base);
}

#[test]
fn disabled_multiplication_passes_features_through() {
    let cfg = ModelConfig { multiplication_layer: false, ..ModelConfig::desk_light() };
    let m: Model<f64> = Model::new(cfg, policy(), 4).unwrap();
    let mut g = Graph::new();
    let pass = m.forward(&mut g, &images(1, 32, 5), &masks(1, 4), Mode::Eval, 0).unwrap();
    assert_eq!(pass.glimpses, pass.features);
}

#[test]
fn input_errors() {
    let m: Model<f64> = Model::new(ModelConfig::desk_light(), policy(), 4).unwrap();
    let mut g = Graph::new();
    let r = m.forward(&mut g, &images(1, 16, 5), &masks(1, 2), Mode::Eval, 0);
    assert!(matches!(r, Err(Error::Validation(_))));
    let r = m.forward(&mut g, &images(1, 32, 5), &masks(1, 8), Mode::Eval, 0);
    assert!(matches!(r, Err(Error::Dimension(_))));
    let mut soft = masks(1, 4);
    soft.values_mut()[0] = 0.5;
    assert!(m.forward(&mut g, &images(1, 32, 5), &soft, Mode::Eval, 0).is_err());
}

#[test]
fn from_params_checks_policy() {
    let m: Model<f32> = Model::new(ModelConfig::desk_light(), policy(), 1).unwrap();
    let other =
        TaskPolicy::new("o", vec![Task::new("Body", vec![Category::new("Build", &["Thin", "Fat", "X"])])]).unwrap();
    let r = Model::from_params(ModelConfig::desk_light(), other, m.params().clone());
    assert!(matches!(r, Err(Error::Config(_))));
    assert!(Model::from_params(ModelConfig::desk_light(), policy(), m.params().clone()).is_ok());
}

#[test]
fn running_statistics_update() {
    let mut m: Model<f64> = Model::new(ModelConfig::desk_light(), policy(), 1).unwrap();
    let mut g = Graph::new();
    let pass = m.forward(&mut g, &images(2, 32, 7), &masks(2, 4), Mode::Train, 0).unwrap();
    let stem =
        pass.norm_updates.iter().find(|u| m.params().entries()[u.tag].name == "stem.bn.running_mean").unwrap().clone();
    m.apply_norm_updates(&pass.norm_updates);
    let rm = m.params().get("stem.bn.running_mean").unwrap().tensor.values();
    let rv = m.params().get("stem.bn.running_var").unwrap().tensor.values();
    let n = stem.stats.count as f64;
    for c in 0..8 {
        assert!((rm[c] - 0.1 * stem.stats.mean[c]).abs() < 1e-12);
        assert!((rv[c] - (0.9 + 0.1 * stem.stats.var[c] * n / (n - 1.0))).abs() < 1e-12);
    }
}

#[test]
fn labels_threshold_inclusive() {
    assert_eq!(predict_labels(&[0.5, 0.4999, 0.9, 0.0]), vec![1, 0, 1, 0]);
    let p = Prediction::new(vec![0.2, 0.7]);
    assert_eq!(p.labels, vec![0, 1]);
}

#[test]
fn full_resolution_grid() {
    assert_eq!(ModelConfig::full_scale().feature_shape(), [16, 16, 1024]);
    assert_eq!(ModelConfig::light().feature_shape(), [16, 16, 512]);
    let slim = ModelConfig {
        stem_channels: 4,
        blocks_per_stage: 1,
        stage_channels: vec![4, 4, 4, 8],
        branch_widths: vec![8, 8, 8],
        ..ModelConfig::full_scale()
    };
    let m: Model<f32> = Model::new(slim, policy(), 3).unwrap();
    let img: Tensor<f32> = images(1, 256, 1).cast();
    let mut g = Graph::new();
    let pass = m.forward(&mut g, &img, &masks(1, 16).cast(), Mode::Eval, 0).unwrap();
    assert_eq!(g.shape(pass.features), &[1, 16, 16, 8]);
    assert_eq!(g.shape(pass.probs), &[1, 6]);
}
