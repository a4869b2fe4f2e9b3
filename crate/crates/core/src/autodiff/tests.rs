use super::*;
use crate::Error;
use alloc::vec;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape.to_vec(), v).unwrap()
}

#[test]
fn sum_gives_ones_and_square_gives_twice() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[3], &[1.0, -2.0, 0.5]));
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[3], &[1.0, -2.0, 0.5]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, -4.0, 1.0]);
}

#[test]
fn backward_visits_in_reverse_tape_order() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[2], &[1.0, 2.0]));
    let y = g.variable(t(&[2], &[3.0, 4.0]));
    let a = g.mul(x, y).unwrap();
    let b = g.add(a, x).unwrap();
    let r = g.relu(b).unwrap();
    let l = g.sum(r).unwrap();
    let grads = g.backward(l).unwrap();
    let order: Vec<usize> = grads.order().iter().map(|id| id.index()).collect();
    assert_eq!(order, vec![l.index(), r.index(), b.index(), a.index(), y.index(), x.index()]);
    // intermediate gradients are kept
    assert_eq!(grads.get(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(grads.get(x).unwrap(), &[4.0, 5.0]);
}

#[test]
fn unreached_variables_get_zeros() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[2], &[1.0, 2.0]));
    let unused = g.variable(t(&[3], &[1.0, 2.0, 3.0]));
    let l = g.sum(x).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(unused).unwrap(), &[0.0; 3]);
}

#[test]
fn detached_loss_is_empty() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[2], &[1.0, 2.0]));
    let l = g.sum(x).unwrap();
    let grads = g.backward(l).unwrap();
    assert!(grads.is_detached());
    assert!(grads.is_empty());
    assert!(grads.get(x).is_none());
}

#[test]
fn second_backward_needs_reset() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[2], &[1.0, 2.0]));
    let l = g.sum(x).unwrap();
    g.backward(l).unwrap();
    assert!(matches!(g.backward(l), Err(Error::Validation(_))));
    g.reset_backward();
    assert_eq!(g.backward(l).unwrap().get(x).unwrap(), &[1.0, 1.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(t(&[2], &[1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(Error::Validation(_))));
}

#[test]
fn mask_multiply_examples() {
    let mut g = Graph::<f64>::new();
    // two channels, [[1,2],[3,4]] each
    let f = g.variable(t(&[1, 2, 2, 2], &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]));
    let m = t(&[1, 2, 2, 1], &[1.0, 0.0, 0.0, 1.0]);
    let out = g.mask_mul(f, &m, true).unwrap();
    assert_eq!(g.value(out).values(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 4.0, 4.0]);
    let l = g.sum(out).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(f).unwrap(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);

    let mut g = Graph::<f64>::new();
    let f = g.variable(t(&[1, 2, 2, 1], &[5.0, -1.0, 2.0, 7.0]));
    let ones = g.mask_mul(f, &Tensor::ones(vec![1, 2, 2, 1]), true).unwrap();
    assert_eq!(g.value(ones), g.value(f));
    let zeros = g.mask_mul(f, &Tensor::zeros(vec![1, 2, 2, 1]), true).unwrap();
    assert!(g.value(zeros).values().iter().all(|&v| v == 0.0));
    let l = g.sum(zeros).unwrap();
    assert!(g.backward(l).unwrap().get(f).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn mask_multiply_errors() {
    let mut g = Graph::<f64>::new();
    let f = g.variable(Tensor::ones(vec![1, 2, 2, 1]));
    let wrong = Tensor::ones(vec![1, 3, 2, 1]);
    assert!(matches!(g.mask_mul(f, &wrong, true), Err(Error::Dimension(_))));
    let soft = t(&[1, 2, 2, 1], &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(g.mask_mul(f, &soft, true), Err(Error::Validation(_))));
    assert!(g.mask_mul(f, &soft, false).is_ok());
}

#[test]
fn conv_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::ones(vec![1, 3, 3, 1]));
    let w = g.variable(Tensor::ones(vec![2, 2, 1, 1]));
    let y = g.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 2, 2, 1]);
    assert_eq!(g.value(y).values(), &[4.0; 4]);

    let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
    let x = g.input(t(&[1, 2, 3, 2], &data));
    let id = g.variable(t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let y = g.conv2d(x, id, None, 1, 0).unwrap();
    assert_eq!(g.value(y).values(), &data[..]);

    let big = g.variable(Tensor::ones(vec![5, 5, 2, 1]));
    assert!(matches!(g.conv2d(x, big, None, 1, 0), Err(Error::Dimension(_))));
}

#[test]
fn pooling_dense_and_activations() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]));
    let p = g.global_avg_pool(x).unwrap();
    assert_eq!(g.value(p).values(), &[2.5]);

    let x = g.input(t(&[2], &[1.0, 2.0]));
    let w = g.variable(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.variable(t(&[2], &[1.0, 1.0]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).values(), &[2.0, 3.0]);
    let bad = g.variable(Tensor::ones(vec![3, 2]));
    assert!(matches!(g.dense(x, bad, b), Err(Error::Dimension(_))));

    let x = g.input(t(&[3], &[-3.0, 3.0, 0.0]));
    let r = g.relu(x).unwrap();
    assert_eq!(g.value(r).values(), &[0.0, 3.0, 0.0]);
    let s = g.sigmoid(x).unwrap();
    assert_eq!(g.value(s).values()[2], 0.5);
    assert!(g.value(s).values().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn batch_norm_examples() {
    let mut g = Graph::<f64>::new();
    let gamma = g.variable(Tensor::ones(vec![1]));
    let beta = g.variable(Tensor::zeros(vec![1]));
    let c = g.input(Tensor::full(vec![4, 1], 3.0));
    let (y, stats) = g.batch_norm_train(c, gamma, beta).unwrap();
    assert_eq!(g.value(y).values(), &[0.0; 4]);
    assert_eq!((stats.mean[0], stats.var[0], stats.count), (3.0, 0.0, 4));

    let x = g.input(t(&[2, 1], &[-1.0, 1.0]));
    let (y, _) = g.batch_norm_train(x, gamma, beta).unwrap();
    for (got, want) in g.value(y).values().iter().zip([-1.0, 1.0]) {
        assert!((got - want).abs() < 1e-5);
    }

    let one = g.input(Tensor::ones(vec![1, 1]));
    assert!(matches!(g.batch_norm_train(one, gamma, beta), Err(Error::Validation(_))));
    assert!(g.batch_norm_eval(one, gamma, beta, &[0.0], &[1.0]).is_ok());
}

#[test]
fn dropout_modes() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::ones(vec![100_000]));
    assert_eq!(g.dropout(x, 0.7, 1, Mode::Eval).unwrap(), x);
    assert_eq!(g.dropout(x, 0.0, 1, Mode::Train).unwrap(), x);
    assert!(matches!(g.dropout(x, 1.0, 1, Mode::Train), Err(Error::Validation(_))));

    let a = g.dropout(x, 0.7, 9, Mode::Train).unwrap();
    let b = g.dropout(x, 0.7, 9, Mode::Train).unwrap();
    assert_eq!(g.value(a), g.value(b));
    let kept = g.value(a).values().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
    assert!((kept - 0.3).abs() < 0.01, "{kept}");
    let scale = g.value(a).values().iter().copied().find(|&v| v != 0.0).unwrap();
    assert!((scale - 1.0 / 0.3).abs() < 1e-12);
}

#[test]
fn relu_pattern_tracks_signs() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[3], &[-1.0, 2.0, 0.0]));
    g.relu(x).unwrap();
    let y = g.input(t(&[1], &[0.5]));
    g.relu(y).unwrap();
    assert_eq!(g.relu_pattern(), vec![false, true, false, true]);
}

#[test]
fn finite_inputs_give_finite_outputs() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[1, 2, 2, 1], &[700.0, -700.0, 0.0, 1e-300]));
    let s = g.sigmoid(x).unwrap();
    let r = g.relu(x).unwrap();
    assert!(g.value(s).all_finite() && g.value(r).all_finite());
}
