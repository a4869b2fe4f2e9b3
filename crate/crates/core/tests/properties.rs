use maskpar_core::autodiff::Mode;
use maskpar_core::data::preprocess::{pad_square, resize_nearest};
use maskpar_core::data::{augment, downsample_mask, preprocess, AugmentParams, Processed};
use maskpar_core::data::{Image, Mask, Sample};
use maskpar_core::losses::{focal_loss, plain_bce_loss, weighted_focal_loss, weighted_loss};
use maskpar_core::policy::{Category, Task};
use maskpar_core::{mean_accuracy, Graph, TaskPolicy, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;

fn sample(h: usize, w: usize, mask: Vec<u8>) -> Sample {
    let data = (0..h * w * 3).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
    Sample::new("s", Image::new(h, w, data).unwrap(), Mask::new(h, w, mask).unwrap(), vec![1, 0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_multiply_keeps_or_kills(
        (h, w, d) in (1usize..5, 1usize..5, 1usize..4),
        seed in any::<u64>(),
    ) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..h * w * d).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)).collect();
        let m: Vec<f64> = (0..h * w).map(|_| rand::Rng::random_bool(&mut r, 0.5) as u8 as f64).collect();
        let mut g = Graph::<f64>::new();
        let fid = g.variable(Tensor::new(vec![1, h, w, d], f.clone()).unwrap());
        let out = g.mask_mul(fid, &Tensor::new(vec![1, h, w, 1], m.clone()).unwrap(), true).unwrap();
        let sq = g.mul(out, out).unwrap();
        let l = g.sum(sq).unwrap();
        let grads = g.backward(l).unwrap();
        let (o, gf) = (g.value(out).values(), grads.get(fid).unwrap());
        for i in 0..h * w * d {
            if m[i / d] == 0.0 {
                prop_assert_eq!(o[i], 0.0);
                prop_assert_eq!(gf[i], 0.0);
            } else {
                prop_assert_eq!(o[i], f[i]);
                prop_assert_eq!(gf[i], 2.0 * f[i]);
            }
        }
    }

    #[test]
    fn conv_output_shape(
        (h, w, k, s, p) in (1usize..9, 1usize..9, 1usize..4, 1usize..3, 0usize..3),
    ) {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(vec![1, h, w, 2]));
        let kern = g.variable(Tensor::zeros(vec![k, k, 2, 3]));
        let out = g.conv2d(x, kern, None, s, p);
        if h + 2 * p < k || w + 2 * p < k {
            prop_assert!(out.is_err());
        } else {
            let out = out.unwrap();
            prop_assert_eq!(g.shape(out), &[1, (h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1, 3][..]);
        }
    }

    #[test]
    fn preprocess_shapes_and_binariness(
        (h, w) in (1usize..40, 1usize..40),
        grid in prop::sample::select(vec![1usize, 2, 4, 8]),
        seed in any::<u64>(),
    ) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mask: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut r, 0.4) as u8).collect();
        mask[0] = 1;
        let s = sample(h, w, mask);
        let p = preprocess(&s, 16, grid).unwrap();
        prop_assert_eq!((p.image.h, p.image.w, p.mask.h, p.grid.h, p.grid.w), (16, 16, 16, grid, grid));
        prop_assert!(p.mask.data.iter().chain(&p.grid.data).all(|&v| v <= 1));
        prop_assert!(p.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        // already processed: unchanged
        prop_assert_eq!(preprocess(&p.to_sample(), 16, grid).unwrap(), p);
    }

    #[test]
    fn padding_keeps_every_foreground_pixel((h, w) in (1usize..30, 1usize..30), seed in any::<u64>()) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut r, 0.5) as u8).collect();
        let s = sample(h, w, mask);
        let (img, m) = pad_square(&s.image, &s.mask);
        prop_assert_eq!(img.h, h.max(w));
        prop_assert_eq!(m.foreground(), s.mask.foreground());
        let full = Mask::filled(m.h, m.w, 1);
        let grid = if m.h % 2 == 0 { 2 } else { 1 };
        prop_assert!(downsample_mask(&resize_nearest(&full, 8, 8), grid).unwrap().data.iter().all(|&v| v == 1));
    }

    #[test]
    fn augmentation_keeps_labels_and_binary_masks(seed in any::<u64>(), epoch in 0u64..5) {
        let s = sample(24, 16, (0..24 * 16).map(|i| ((i / 16) % 3 != 0) as u8).collect());
        let p = preprocess(&s, 16, 4).unwrap();
        let a = maskpar_core::data::augment_seeded(&p, seed, epoch).unwrap();
        prop_assert_eq!(&a.labels, &p.labels);
        prop_assert!(a.mask.data.iter().chain(&a.grid.data).all(|&v| v <= 1));
        prop_assert!(a.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a.grid, downsample_mask(&a.mask, 4).unwrap());
    }

    #[test]
    fn loss_orderings(
        (n, seed) in (1usize..5, any::<u64>()),
        gamma in 0.5f64..4.0,
    ) {
        let policy = TaskPolicy::new("p", vec![
            Task::new("A", vec![Category::new("x", &["a", "b", "c"])]),
            Task::new("B", vec![Category::new("y", &["d"]), Category::new("z", &["e", "f"])]),
        ]).unwrap();
        let a = policy.attribute_count();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n * a).map(|_| rand::Rng::random_range(&mut r, 0.01..0.99)).collect();
        let y: Vec<f64> = (0..n * a).map(|_| rand::Rng::random_bool(&mut r, 0.5) as u8 as f64).collect();
        let eval = |f: &dyn Fn(&mut Graph<f64>, maskpar_core::TensorId) -> maskpar_core::TensorId| {
            let mut g = Graph::new();
            let id = g.variable(Tensor::new(vec![n, a], p.clone()).unwrap());
            let l = f(&mut g, id);
            g.value(l).values()[0]
        };
        let bce = eval(&|g, id| plain_bce_loss(g, id, &y).unwrap());
        let focal = eval(&|g, id| focal_loss(g, id, &y, gamma).unwrap());
        let wbce = eval(&|g, id| weighted_loss(g, id, &y, &policy).unwrap());
        let wfocal = eval(&|g, id| weighted_focal_loss(g, id, &y, &policy, gamma).unwrap());
        prop_assert!(bce > 0.0 && wbce > 0.0);
        // the modulating factor is below one
        prop_assert!(focal < bce);
        prop_assert!(wfocal < wbce);
        prop_assert!(focal >= 0.0 && wfocal >= 0.0);
    }

    #[test]
    fn metric_invariants((n, a) in (1usize..30, 1usize..12), seed in any::<u64>()) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<u8> = (0..n * a).map(|_| rand::Rng::random_bool(&mut r, 0.5) as u8).collect();
        let p: Vec<u8> = (0..n * a).map(|_| rand::Rng::random_bool(&mut r, 0.5) as u8).collect();
        let rep = mean_accuracy(&p, &y, a).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.mean_accuracy));
        // reversed samples and reversed attributes
        let rows = |v: &[u8]| -> Vec<u8> { v.chunks(a).rev().flatten().copied().collect() };
        prop_assert_eq!(&mean_accuracy(&rows(&p), &rows(&y), a).unwrap().attributes, &rep.attributes);
        let cols = |v: &[u8]| -> Vec<u8> { v.chunks(a).flat_map(|c| c.iter().rev().copied()).collect() };
        let flipped = mean_accuracy(&cols(&p), &cols(&y), a).unwrap();
        for (m, f) in rep.attributes.iter().zip(flipped.attributes.iter().rev()) {
            prop_assert_eq!(m.counts, f.counts);
        }
        prop_assert_eq!(mean_accuracy(&y, &y, a).unwrap().mean_accuracy, 1.0);
    }
}

#[test]
fn eval_mode_dropout_is_identity() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::ones(vec![4]));
    assert_eq!(g.dropout(x, 0.5, 3, Mode::Eval).unwrap(), x);
}

#[test]
fn identity_augmentation_of_processed_sample() {
    let s = sample(16, 16, vec![1; 256]);
    let p: Processed = preprocess(&s, 16, 4).unwrap();
    assert_eq!(augment(&p, &AugmentParams::identity()).unwrap(), p);
}
