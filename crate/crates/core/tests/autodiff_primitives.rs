mod common;

use common::*;
use common::oracle_suite::{self, conv_case};
use ldfnet_core::autodiff::{BatchNormMode, Conv2dParams, ConvTranspose2dParams};
use ldfnet_core::{Error, LabelMap, Tape, Tensor};
use rand::Rng;

#[test]
fn conv2d_matches_direct_sum_on_random_geometries() {
    oracle_suite::conv2d_matches_direct_sum_on_random_geometries();
}

#[test]
fn conv2d_reference_example_matches_oracle_in_f32() {
    let mut r = rng(7);
    let x = random_tensor(&mut r, &[2, 3, 5, 7]);
    let w = random_tensor(&mut r, &[4, 3, 3, 1]);
    let mut tape = Tape::<f32>::new();
    let (xv, wv) = (tape.constant(x.cast()), tape.constant(w.cast()));
    let out = tape.conv2d(xv, wv, None, Conv2dParams::default()).unwrap();
    let expected = conv2d_oracle(&x, &w, None, (1, 1), (0, 0), (1, 1));
    assert_eq!(tape.shape(out), &[2, 4, 3, 7]);
    for (a, e) in tape.value(out).data().iter().zip(expected.data()) {
        assert!((*a as f64 - e).abs() <= 1e-6 * e.abs().max(1.0));
    }
}

#[test]
fn conv2d_output_sizes() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 8, 8]));
    let w = tape.constant(Tensor::zeros(&[1, 1, 3, 3]));
    let same = tape.conv2d(x, w, None, Conv2dParams::new((1, 1), (1, 1), (1, 1))).unwrap();
    assert_eq!(tape.shape(same), &[1, 1, 8, 8]);

    let x = tape.constant(Tensor::zeros(&[1, 1, 10, 10]));
    let dilated = tape.conv2d(x, w, None, Conv2dParams::new((1, 1), (0, 0), (2, 2))).unwrap();
    assert_eq!(tape.shape(dilated), &[1, 1, 6, 6]);
}

#[test]
fn conv2d_rejects_bad_arguments() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
    match tape.conv2d(x, w, None, Conv2dParams::default()) {
        Err(Error::ShapeMismatch { dim, .. }) => assert_eq!(dim, "input channels"),
        other => panic!("expected channel mismatch, got {other:?}"),
    }
    let w = tape.constant(Tensor::zeros(&[1, 2, 3, 3]));
    assert!(matches!(
        tape.conv2d(x, w, None, Conv2dParams::new((0, 1), (0, 0), (1, 1))),
        Err(Error::Argument { .. })
    ));
    assert!(matches!(
        tape.conv2d(x, w, None, Conv2dParams::new((1, 1), (0, 0), (0, 1))),
        Err(Error::Argument { .. })
    ));
    assert!(matches!(
        tape.conv2d(x, w, None, Conv2dParams::new((1, 1), (0, 0), (3, 3))),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn conv_transpose2d_matches_scatter_oracle() {
    let mut r = rng(2);
    for _ in 0..50 {
        let s = (r.gen_range(1..=3), r.gen_range(1..=3));
        let k = (r.gen_range(1..=3), r.gen_range(1..=3));
        let p = (r.gen_range(0..k.0), r.gen_range(0..k.1));
        let op = (r.gen_range(0..s.0), r.gen_range(0..s.1));
        let xs = [r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(2..5), r.gen_range(2..5)];
        if (xs[2] - 1) * s.0 + k.0 + op.0 <= 2 * p.0 || (xs[3] - 1) * s.1 + k.1 + op.1 <= 2 * p.1 {
            continue;
        }
        let x = random_tensor(&mut r, &xs);
        let ws = [xs[1], r.gen_range(1..=3), k.0, k.1];
        let w = random_tensor(&mut r, &ws);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
        let out = tape.conv_transpose2d(xv, wv, None, ConvTranspose2dParams::new(s, p, op)).unwrap();
        let expected = conv_transpose2d_oracle(&x, &w, s, p, op);
        assert_eq!(tape.shape(out), expected.shape());
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-12);
    }
}

#[test]
fn conv_transpose2d_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 4, 4]));
    let w = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let up = tape.conv_transpose2d(x, w, None, ConvTranspose2dParams::new((2, 2), (0, 0), (0, 0))).unwrap();
    assert_eq!(tape.shape(up), &[1, 1, 8, 8]);

    let data = random_tensor(&mut rng(3), &[1, 1, 5, 6]);
    let x = tape.constant(data.clone());
    let ones = tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
    let same = tape.conv_transpose2d(x, ones, None, ConvTranspose2dParams::default()).unwrap();
    assert_eq!(tape.value(same), &data);
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    let mut r = rng(4);
    for _ in 0..100 {
        let (xs, ks, p) = conv_case(&mut r);
        // Geometry where the transposed output size recovers the input size.
        let p = Conv2dParams::new(p.stride, p.padding, (1, 1));
        let (kh, kw) = (ks[2], ks[3]);
        let Some((oh, ow)) = p.output_hw(xs[2], xs[3], kh, kw) else { continue };
        let oph = xs[2] + 2 * p.padding.0 - kh - (oh - 1) * p.stride.0;
        let opw = xs[3] + 2 * p.padding.1 - kw - (ow - 1) * p.stride.1;
        if oph >= p.stride.0 || opw >= p.stride.1 {
            continue;
        }
        let x = random_tensor(&mut r, &xs);
        let w = random_tensor(&mut r, &ks);
        let y = random_tensor(&mut r, &[xs[0], ks[0], oh, ow]);
        let mut tape = Tape::new();
        let (xv, wv, yv) = (tape.constant(x.clone()), tape.constant(w), tape.constant(y.clone()));
        let cx = tape.conv2d(xv, wv, None, p).unwrap();
        let ty = tape
            .conv_transpose2d(yv, wv, None, ConvTranspose2dParams::new(p.stride, p.padding, (oph, opw)))
            .unwrap();
        assert_eq!(tape.shape(ty), x.shape());
        let lhs = tape.value(cx).dot(&y);
        let rhs = x.dot(tape.value(ty));
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn pooling_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true);
    let mx = tape.max_pool2d(x, (2, 2), (2, 2)).unwrap();
    let av = tape.avg_pool2d(x, (2, 2), (2, 2)).unwrap();
    assert_eq!(tape.value(mx).data(), &[4.0]);
    assert_eq!(tape.value(av).data(), &[2.5]);

    let c = tape.leaf(Tensor::full(&[1, 1, 4, 4], 3.0), true);
    let mx = tape.max_pool2d(c, (2, 2), (2, 2)).unwrap();
    let av = tape.avg_pool2d(c, (2, 2), (2, 2)).unwrap();
    assert!(tape.value(mx).data().iter().all(|&v| v == 3.0));
    assert!(tape.value(av).data().iter().all(|&v| v == 3.0));
    let s = tape.sum(mx).unwrap();
    let g = tape.backward(s).unwrap().wrt(c);
    // First row-major index of every window receives the gradient.
    let expected: Vec<f64> = (0..16).map(|i| if (i / 4) % 2 == 0 && i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    assert_eq!(g.data(), expected.as_slice());

    let mut tape = Tape::<f64>::new();
    let small = tape.constant(Tensor::zeros(&[1, 1, 1, 3]));
    assert!(matches!(tape.max_pool2d(small, (2, 2), (2, 2)), Err(Error::Argument { .. })));
    assert!(matches!(tape.avg_pool2d(small, (2, 2), (2, 2)), Err(Error::Argument { .. })));
}

#[test]
fn pooling_matches_window_oracles() {
    oracle_suite::pooling_matches_window_oracles();
}

#[test]
fn batch_norm_examples() {
    // Per-channel zero mean, unit (biased) variance: +-1 pattern.
    let data: Vec<f64> = (0..2 * 2 * 2 * 2).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = Tensor::from_vec(&[2, 2, 2, 2], data).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let g = tape.constant(Tensor::full(&[2], 1.0));
    let b = tape.constant(Tensor::zeros(&[2]));
    let (y, stats) = tape.batch_norm(xv, g, b, BatchNormMode::Train, 1e-5).unwrap();
    assert!(tape.value(y).max_abs_diff(&x) < 1e-5);
    let stats = stats.unwrap();
    assert_eq!(stats.mean, vec![0.0, 0.0]);

    let g0 = tape.constant(Tensor::zeros(&[2]));
    let beta = tape.constant(Tensor::from_vec(&[2], vec![0.5, -2.0]).unwrap());
    let (y, _) = tape.batch_norm(xv, g0, beta, BatchNormMode::Train, 1e-5).unwrap();
    for ch in 0..2 {
        for n in 0..2 {
            for i in 0..4 {
                assert_eq!(tape.value(y).data()[(n * 2 + ch) * 4 + i], [0.5, -2.0][ch]);
            }
        }
    }

    let mean = [1.0, 2.0];
    let var = [4.0, 9.0];
    let (y, stats) = tape
        .batch_norm(xv, g, b, BatchNormMode::Eval { mean: &mean, var: &var }, 0.0)
        .unwrap();
    assert!(stats.is_none());
    assert!((tape.value(y).at4(0, 1, 0, 0) - (1.0 - 2.0) / 3.0).abs() < 1e-12);

    let one = tape.constant(Tensor::zeros(&[1, 2, 1, 1]));
    assert!(matches!(
        tape.batch_norm(one, g, b, BatchNormMode::Train, 1e-5),
        Err(Error::Argument { .. })
    ));
}

#[test]
fn elementwise_examples() {
    let mut r = rng(6);
    let x = random_tensor(&mut r, &[1, 3, 4, 4]);
    let d = random_tensor(&mut r, &[1, 1, 4, 4]);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let dv = tape.constant(d.clone());
    let zeros = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let sum = tape.add(xv, zeros).unwrap();
    assert_eq!(tape.value(sum), &x);

    let dropped = tape.dropout(xv, 0.05, false, &mut r).unwrap();
    assert_eq!(tape.value(dropped), &x);

    let cat = tape.concat_channels(&[xv, dv]).unwrap();
    assert_eq!(tape.shape(cat), &[1, 4, 4, 4]);
    assert_eq!(tape.value(cat).slice_channels(0, 3).unwrap(), x);
    assert_eq!(tape.value(cat).slice_channels(3, 1).unwrap(), d);

    assert!(matches!(tape.add(xv, dv), Err(Error::ShapeMismatch { .. })));
    let other = tape.constant(Tensor::zeros(&[1, 1, 4, 5]));
    assert!(matches!(tape.concat_channels(&[xv, other]), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn dropout_zeroes_and_rescales() {
    let mut r = rng(8);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(&[1, 1, 100, 100], 1.0));
    let y = tape.dropout(x, 0.25, true, &mut r).unwrap();
    let vals = tape.value(y).data();
    let zeros = vals.iter().filter(|&&v| v == 0.0).count();
    assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
    assert!((zeros as f64 / 10_000.0 - 0.25).abs() < 0.02);
    assert!(tape.dropout(x, 1.0, true, &mut r).is_err());
}

#[test]
fn cross_entropy_examples() {
    let labels = LabelMap::new(1, 2, 2, vec![0, 1, 1, 0]).unwrap();
    let mut tape = Tape::<f64>::new();
    let uniform = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
    let loss = tape.weighted_cross_entropy(uniform, &labels, &[1.0, 1.0], 255).unwrap();
    assert!((tape.value(loss).data()[0] - 2f64.ln()).abs() < 1e-12);

    let mut strong = vec![0.0; 8];
    for (p, &l) in labels.data().iter().enumerate() {
        strong[usize::from(l) * 4 + p] = 50.0;
    }
    let confident = tape.constant(Tensor::from_vec(&[1, 2, 2, 2], strong).unwrap());
    let loss = tape.weighted_cross_entropy(confident, &labels, &[1.0, 1.0], 255).unwrap();
    assert!(tape.value(loss).data()[0] < 1e-12);

    let bad = LabelMap::new(1, 2, 2, vec![0, 1, 7, 0]).unwrap();
    match tape.weighted_cross_entropy(uniform, &bad, &[1.0, 1.0], 255) {
        Err(Error::Data(msg)) => assert!(msg.contains("y=1, x=0"), "{msg}"),
        other => panic!("expected data error, got {other:?}"),
    }
}

#[test]
fn cross_entropy_matches_softmax_oracle() {
    oracle_suite::cross_entropy_matches_softmax_oracle();
}

#[test]
fn backward_basics() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random_tensor(&mut rng(10), &[2, 3, 4, 5]), true);
    let unused = tape.leaf(Tensor::full(&[3], 2.0), true);
    let s = tape.sum(x).unwrap();
    let grads = tape.backward(s).unwrap();
    assert!(grads.wrt(x).data().iter().all(|&g| g == 1.0));
    assert!(grads.get(unused).is_none());
    assert!(grads.wrt(unused).data().iter().all(|&g| g == 0.0));

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]), true);
    assert!(matches!(tape.backward(x), Err(Error::Usage(_))));

    let mut tape = Tape::<f64>::new();
    let c = tape.constant(Tensor::zeros(&[2]));
    let s = tape.sum(c).unwrap();
    assert!(matches!(tape.backward(s), Err(Error::Usage(_))));
}

#[test]
fn operations_do_not_mutate_inputs() {
    let mut r = rng(11);
    let x = random_tensor(&mut r, &[1, 2, 4, 4]);
    let w = random_tensor(&mut r, &[2, 2, 3, 3]);
    let mut tape = Tape::new();
    let (xv, wv) = (tape.leaf(x.clone(), true), tape.leaf(w.clone(), true));
    let y = tape.conv2d(xv, wv, None, Conv2dParams::new((1, 1), (1, 1), (1, 1))).unwrap();
    let y = tape.relu(y).unwrap();
    let y = tape.max_pool2d(y, (2, 2), (2, 2)).unwrap();
    let s = tape.sum(y).unwrap();
    assert_eq!(tape.value(xv), &x);
    assert_eq!(tape.value(wv), &w);
    let _ = tape.backward(s).unwrap();
}
