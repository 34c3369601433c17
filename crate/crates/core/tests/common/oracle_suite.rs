//! Brute-force oracle comparisons over random small instances.

use super::*;
use ldfnet_core::autodiff::Conv2dParams;
use ldfnet_core::metrics::{AbsentClasses, ConfusionMatrix};
use ldfnet_core::{LabelMap, Tape, IGNORE_INDEX};
use rand::Rng;

pub const INSTANCES: usize = 100;

pub fn conv_case(rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>, Conv2dParams) {
    let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let dil = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let pad = (rng.gen_range(0..=2), rng.gen_range(0..=2));
    let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let h = dil.0 * (kh - 1) + 1 + rng.gen_range(0..5);
    let w = dil.1 * (kw - 1) + 1 + rng.gen_range(0..5);
    let x = vec![rng.gen_range(1..=2), rng.gen_range(1..=3), h, w];
    let k = vec![rng.gen_range(1..=3), x[1], kh, kw];
    (x, k, Conv2dParams::new(stride, pad, dil))
}

pub fn conv2d_matches_direct_sum_on_random_geometries() {
    let mut r = rng(1);
    for _ in 0..INSTANCES {
        let (xs, ks, p) = conv_case(&mut r);
        let x = random_tensor(&mut r, &xs);
        let w = random_tensor(&mut r, &ks);
        let b = random_tensor(&mut r, &[ks[0]]);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let out = tape.conv2d(xv, wv, Some(bv), p).unwrap();
        let expected = conv2d_oracle(&x, &w, Some(&b), p.stride, p.padding, p.dilation);
        assert_eq!(tape.shape(out), expected.shape());
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-12);
    }
}

pub fn pooling_matches_window_oracles() {
    let mut r = rng(5);
    for _ in 0..INSTANCES {
        let shape = [r.gen_range(1..=2), r.gen_range(1..=3), 2 * r.gen_range(1..=4), 2 * r.gen_range(1..=4)];
        let x = random_tensor(&mut r, &shape);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mx = tape.max_pool2d(xv, (2, 2), (2, 2)).unwrap();
        let av = tape.avg_pool2d(xv, (2, 2), (2, 2)).unwrap();
        let max = pool_oracle(&x, 2, 2, |v| v.iter().copied().fold(f64::MIN, f64::max));
        let mean = pool_oracle(&x, 2, 2, |v| v.iter().sum::<f64>() / v.len() as f64);
        assert_eq!(tape.value(mx), &max);
        assert!(tape.value(av).max_abs_diff(&mean) < 1e-7);
    }
}

pub fn cross_entropy_matches_softmax_oracle() {
    let mut r = rng(9);
    for _ in 0..INSTANCES {
        let (n, k, h, w) = (r.gen_range(1..=2), r.gen_range(2..=5), r.gen_range(1..=4), r.gen_range(1..=4));
        let logits = random_tensor(&mut r, &[n, k, h, w]).map(|v| 4.0 * v);
        let labels: Vec<u8> = (0..n * h * w)
            .map(|_| if r.gen_bool(0.1) { 255 } else { r.gen_range(0..k as u8) })
            .collect();
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(0.5..3.0)).collect();
        let map = LabelMap::new(n, h, w, labels.clone()).unwrap();
        let mut tape = Tape::new();
        let z = tape.constant(logits.clone());
        let loss = tape.weighted_cross_entropy(z, &map, &weights, 255).unwrap();
        let got = tape.value(loss).data()[0];
        let expected = cross_entropy_oracle(&logits, &labels, &weights, 255);
        assert!(got >= 0.0);
        assert!((got - expected).abs() <= 1e-6 * expected.abs().max(1.0));
    }
}

pub fn random_case(r: &mut impl Rng, classes: usize, pixels: usize) -> (Vec<u8>, Vec<u8>) {
    let gt = (0..pixels)
        .map(|_| if r.gen_bool(0.05) { IGNORE_INDEX } else { r.gen_range(0..classes as u8) })
        .collect();
    let pred = (0..pixels).map(|_| r.gen_range(0..classes as u8)).collect();
    (pred, gt)
}

pub fn miou_matches_set_oracle_on_random_instances() {
    let mut r = rng(51);
    for _ in 0..INSTANCES {
        let k = r.gen_range(2..=8);
        let (pred, gt) = random_case(&mut r, k, 16 * 16);
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate_slices(&pred, &gt).unwrap();
        let expected = class_iou_oracle(&pred, &gt, k, IGNORE_INDEX);
        for (a, b) in cm.class_iou().iter().zip(&expected) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12),
                (None, None) => {}
                other => panic!("presence mismatch {other:?}"),
            }
        }
        assert!((cm.miou(AbsentClasses::Exclude).unwrap() - miou_oracle(&expected)).abs() <= 1e-12);
    }
}

pub const ALL: &[(&str, fn())] = &[
    ("conv2d_matches_direct_sum_on_random_geometries", conv2d_matches_direct_sum_on_random_geometries),
    ("pooling_matches_window_oracles", pooling_matches_window_oracles),
    ("cross_entropy_matches_softmax_oracle", cross_entropy_matches_softmax_oracle),
    ("miou_matches_set_oracle_on_random_instances", miou_matches_set_oracle_on_random_instances),
];
