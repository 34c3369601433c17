//! Central finite-difference checks in f64 for every differentiable
//! primitive and every composite block.

use super::*;
use ldfnet_core::autodiff::{BatchNormMode, Conv2dParams, ConvTranspose2dParams};
use ldfnet_core::nn::{
    BatchNorm2d, Conv2d, ConvBnRelu, ConvTranspose2d, DecoderStage, DenseBlock, DenseModule, DownsamplerBlock,
    EntryKind, Forward, FusionAdapter, Mode, NonBottleneck1d, ParamRegistry, ParamStore, TransitionLayer,
};
use ldfnet_core::{LabelMap, Result, Tape, Tensor, Var, IGNORE_INDEX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: usize = 20;
const SAMPLED: usize = 12;

fn check(name: &str, case: usize, err: f64) {
    assert!(err < FD_TOLERANCE, "{name} case {case}: relative error {err:e}");
}

pub fn conv2d_gradients() {
    let mut r = rng(1);
    for case in 0..CASES {
        let (kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let dil = (r.gen_range(1..=2), r.gen_range(1..=2));
        let geometry = Conv2dParams::new((r.gen_range(1..=2), r.gen_range(1..=2)), (r.gen_range(0..=1), r.gen_range(0..=1)), dil);
        let x_shape = [r.gen_range(1..=2), r.gen_range(1..=3), dil.0 * (kh - 1) + 1 + r.gen_range(0..4), dil.1 * (kw - 1) + 1 + r.gen_range(0..4)];
        let k_shape = [r.gen_range(1..=3), x_shape[1], kh, kw];
        let inputs = [random_tensor(&mut r, &x_shape), random_tensor(&mut r, &k_shape), random_tensor(&mut r, &[k_shape[0]])];
        let err = gradient_check(&inputs, SAMPLED, case as u64, |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), geometry)?;
            project(t, y, 99)
        });
        check("conv2d", case, err);
    }
}

pub fn conv_transpose2d_gradients() {
    let mut r = rng(2);
    for case in 0..CASES {
        let stride = (r.gen_range(1..=2), r.gen_range(1..=2));
        let (kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let pad = (r.gen_range(0..kh), r.gen_range(0..kw));
        let op = (r.gen_range(0..stride.0), r.gen_range(0..stride.1));
        let geometry = ConvTranspose2dParams::new(stride, pad, op);
        let x_shape = [r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=4)];
        if (x_shape[2] - 1) * stride.0 + kh + op.0 <= 2 * pad.0 || (x_shape[3] - 1) * stride.1 + kw + op.1 <= 2 * pad.1 {
            continue;
        }
        let k_shape = [x_shape[1], r.gen_range(1..=3), kh, kw];
        let inputs = [random_tensor(&mut r, &x_shape), random_tensor(&mut r, &k_shape), random_tensor(&mut r, &[k_shape[1]])];
        let err = gradient_check(&inputs, SAMPLED, case as u64, |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], Some(v[2]), geometry)?;
            project(t, y, 98)
        });
        check("conv_transpose2d", case, err);
    }
}

pub fn pooling_gradients() {
    let mut r = rng(3);
    for case in 0..CASES {
        let window = (r.gen_range(1..=3), r.gen_range(1..=3));
        let stride = (r.gen_range(1..=2), r.gen_range(1..=2));
        let shape = [r.gen_range(1..=2), r.gen_range(1..=3), window.0 + r.gen_range(0..4), window.1 + r.gen_range(0..4)];
        let x = [random_tensor(&mut r, &shape)];
        let err = gradient_check(&x, SAMPLED, case as u64, |t, v| {
            let y = t.max_pool2d(v[0], window, stride)?;
            project(t, y, 97)
        });
        check("max_pool2d", case, err);
        let err = gradient_check(&x, SAMPLED, case as u64, |t, v| {
            let y = t.avg_pool2d(v[0], window, stride)?;
            project(t, y, 96)
        });
        check("avg_pool2d", case, err);
    }
}

pub fn batch_norm_gradients() {
    let mut r = rng(4);
    for case in 0..CASES {
        let c = r.gen_range(1..=3);
        let shape = [r.gen_range(1..=3), c, r.gen_range(1..=3), r.gen_range(2..=4)];
        let inputs = [random_tensor(&mut r, &shape), random_tensor(&mut r, &[c]), random_tensor(&mut r, &[c])];
        let err = gradient_check(&inputs, SAMPLED, case as u64, |t, v| {
            let (y, _) = t.batch_norm(v[0], v[1], v[2], BatchNormMode::Train, 1e-5)?;
            project(t, y, 95)
        });
        check("batch_norm/train", case, err);
        let mean: Vec<f64> = (0..c).map(|_| r.gen_range(-0.5..0.5)).collect();
        let var: Vec<f64> = (0..c).map(|_| r.gen_range(0.5..2.0)).collect();
        let err = gradient_check(&inputs, SAMPLED, case as u64, |t, v| {
            let mode = BatchNormMode::Eval { mean: &mean, var: &var };
            let (y, _) = t.batch_norm(v[0], v[1], v[2], mode, 1e-5)?;
            project(t, y, 94)
        });
        check("batch_norm/eval", case, err);
    }
}

fn random_shape(r: &mut impl Rng) -> [usize; 4] {
    [r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=4)]
}

type BinaryOp = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub fn elementwise_gradients() {
    let mut r = rng(5);
    for case in 0..CASES {
        let shape = random_shape(&mut r);
        let pair = [random_tensor(&mut r, &shape), random_tensor(&mut r, &shape)];
        let ops: [(&str, BinaryOp); 5] = [
            ("relu", |t, v| t.relu(v[0])),
            ("add", |t, v| t.add(v[0], v[1])),
            ("mul", |t, v| t.mul(v[0], v[1])),
            ("scale", |t, v| t.scale(v[0], -1.7)),
            ("dropout", |t, v| t.dropout(v[0], 0.3, true, &mut ChaCha8Rng::seed_from_u64(7))),
        ];
        for (name, op) in ops {
            let err = gradient_check(&pair, SAMPLED, case as u64, |t, v| {
                let y = op(t, v)?;
                project(t, y, 93)
            });
            check(name, case, err);
        }
        let err = gradient_check(&pair[..1], SAMPLED, case as u64, |t, v| t.sum(v[0]));
        check("sum", case, err);
    }
}

pub fn channel_gradients() {
    let mut r = rng(6);
    for case in 0..CASES {
        let [n, _, h, w] = random_shape(&mut r);
        let parts: Vec<Tensor<f64>> = (0..r.gen_range(1..=3))
            .map(|_| {
                let c = r.gen_range(1..=3);
                random_tensor(&mut r, &[n, c, h, w])
            })
            .collect();
        let err = gradient_check(&parts, SAMPLED, case as u64, |t, v| {
            let y = t.concat_channels(v)?;
            project(t, y, 92)
        });
        check("concat_channels", case, err);
        let c = parts[0].shape()[1];
        let start = r.gen_range(0..c);
        let len = r.gen_range(1..=c - start);
        let err = gradient_check(&parts[..1], SAMPLED, case as u64, |t, v| {
            let y = t.slice_channels(v[0], start, len)?;
            project(t, y, 91)
        });
        check("slice_channels", case, err);
    }
}

pub fn cross_entropy_gradients() {
    let mut r = rng(7);
    for case in 0..CASES {
        let k = r.gen_range(2..=4);
        let (n, h, w) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
        let logits = [random_tensor(&mut r, &[n, k, h, w]).map(|v| 3.0 * v)];
        let mut labels: Vec<u8> = (0..n * h * w).map(|_| r.gen_range(0..k as u8)).collect();
        if labels.len() > 1 {
            labels[0] = IGNORE_INDEX;
        }
        let labels = LabelMap::new(n, h, w, labels).unwrap();
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(0.5..3.0)).collect();
        let err = gradient_check(&logits, SAMPLED, case as u64, |t, v| {
            t.weighted_cross_entropy(v[0], &labels, &weights, IGNORE_INDEX)
        });
        check("weighted_cross_entropy", case, err);
    }
}

/// Central difference, or `None` when the two one-sided differences disagree,
/// meaning the probe straddles a ReLU or max-pool kink where no derivative exists.
fn smooth_difference(base: f64, up: f64, down: f64) -> Option<f64> {
    let forward = (up - base) / FD_STEP;
    let backward = (base - down) / FD_STEP;
    ((forward - backward).abs() <= 1e-3 * (1.0 + forward.abs() + backward.abs())).then(|| (up - down) / (2.0 * FD_STEP))
}

/// Checks a block's gradients with respect to its inputs and every trainable
/// parameter, with training-mode batch norm and a fixed dropout mask.
fn block_check<B>(
    name: &str,
    case: usize,
    registry: &ParamRegistry,
    inputs: &[Tensor<f64>],
    forward: B,
) where
    B: Fn(&mut Forward<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut r = rng(1000 + case as u64);
    let mut store: ParamStore<f64> = ParamStore::init(registry, case as u64);
    // Move BN affine terms away from their trivial initial values.
    for id in registry.ids().collect::<Vec<_>>() {
        if matches!(registry.spec(id).kind, EntryKind::BnGamma | EntryKind::BnBeta) {
            for v in store.get_mut(id).data_mut() {
                *v += r.gen_range(-0.3..0.3);
            }
        }
    }
    let loss_of = |store: &ParamStore<f64>, xs: &[Tensor<f64>]| -> f64 {
        let mut ctx = Forward::new(store, Mode::Train, 42);
        let vars: Vec<Var> = xs.iter().map(|x| ctx.input(x.clone())).collect();
        let y = forward(&mut ctx, &vars).expect("forward");
        let loss = project(&mut ctx.tape, y, 90).expect("projection");
        ctx.tape.value(loss).data()[0]
    };

    let mut ctx = Forward::new(&store, Mode::Train, 42);
    let vars: Vec<Var> = inputs.iter().map(|x| ctx.differentiable_input(x.clone())).collect();
    let y = forward(&mut ctx, &vars).expect("forward");
    let loss = project(&mut ctx.tape, y, 90).expect("projection");
    let (param_grads, input_grads, _) = ctx.backward_with_inputs(loss, &vars).expect("backward");

    let base = loss_of(&store, inputs);
    let mut kinks = 0;
    let mut exact = Vec::new();
    let mut numeric = Vec::new();
    for (i, x) in inputs.iter().enumerate() {
        for _ in 0..SAMPLED.min(x.numel()) {
            let idx = r.gen_range(0..x.numel());
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[idx] -= FD_STEP;
            match smooth_difference(base, loss_of(&store, &plus), loss_of(&store, &minus)) {
                Some(d) => {
                    numeric.push(d);
                    exact.push(input_grads[i].data()[idx]);
                }
                None => kinks += 1,
            }
        }
    }
    let mut checked = 0;
    for id in registry.ids().collect::<Vec<_>>() {
        if !registry.spec(id).kind.is_trainable() {
            continue;
        }
        let grad = param_grads.get(id).unwrap_or_else(|| panic!("{name}: no gradient for {}", registry.spec(id).name));
        let n = grad.numel();
        for _ in 0..4.min(n) {
            let idx = r.gen_range(0..n);
            let original = store.get(id).data()[idx];
            store.get_mut(id).data_mut()[idx] = original + FD_STEP;
            let up = loss_of(&store, inputs);
            store.get_mut(id).data_mut()[idx] = original - FD_STEP;
            let down = loss_of(&store, inputs);
            store.get_mut(id).data_mut()[idx] = original;
            match smooth_difference(base, up, down) {
                Some(d) => {
                    numeric.push(d);
                    exact.push(grad.data()[idx]);
                }
                None => kinks += 1,
            }
        }
        checked += 1;
    }
    assert!(checked > 0, "{name}: no trainable parameters");
    assert!(
        kinks * 10 <= exact.len() + kinks,
        "{name} case {case}: {kinks} of {} probes straddle a non-differentiable point",
        exact.len() + kinks
    );
    if std::env::var("GRAD_DEBUG").is_ok() {
        eprintln!("{name} {case}: skipped {kinks} of {}", exact.len() + kinks);
        for (e, n) in exact.iter().zip(&numeric) {
            eprintln!("{name} {case}: exact {e:+.6e} numeric {n:+.6e}");
        }
    }
    check(name, case, relative_error(&exact, &numeric));
}

fn even_hw(r: &mut impl Rng) -> (usize, usize) {
    (2 * r.gen_range(1..=3), 2 * r.gen_range(1..=3))
}

pub fn layer_gradients() {
    let mut r = rng(8);
    for case in 0..CASES {
        let (h, w) = (r.gen_range(2..=5), r.gen_range(2..=5));
        let (cin, cout) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let x = [random_tensor(&mut r, &[2, cin, h, w])];

        let mut reg = ParamRegistry::new();
        let conv = Conv2d::new(&mut reg, "c", (cin, cout), (3, 1), Conv2dParams::new((1, 1), (1, 0), (1, 1)), true);
        block_check("conv2d layer", case, &reg, &x, |ctx, v| conv.forward(ctx, v[0]));

        let mut reg = ParamRegistry::new();
        let up = ConvTranspose2d::new(&mut reg, "t", (cin, cout), (3, 3), ConvTranspose2dParams::new((2, 2), (1, 1), (1, 1)), true);
        block_check("conv_transpose2d layer", case, &reg, &x, |ctx, v| up.forward(ctx, v[0]));

        let mut reg = ParamRegistry::new();
        let bn = BatchNorm2d::new(&mut reg, "bn", cin);
        block_check("batch_norm layer", case, &reg, &x, |ctx, v| bn.forward(ctx, v[0]));

        let mut reg = ParamRegistry::new();
        let cbr = ConvBnRelu::new(&mut reg, "cbr", (cin, cout), (1, 1), Conv2dParams::default());
        block_check("conv_bn_relu", case, &reg, &x, |ctx, v| cbr.forward(ctx, v[0]));
    }
}

pub fn downsampler_gradients() {
    let mut r = rng(9);
    for case in 0..CASES {
        let (h, w) = even_hw(&mut r);
        let cin = r.gen_range(1..=3);
        let cout = cin + r.gen_range(1..=3);
        let mut reg = ParamRegistry::new();
        let block = DownsamplerBlock::new(&mut reg, "down", cin, cout).unwrap();
        let shape = [2, cin, h, w];
        let x = [random_tensor(&mut r, &shape)];
        block_check("downsampler", case, &reg, &x, |ctx, v| block.forward(ctx, v[0]));
    }
}

pub fn non_bottleneck_gradients() {
    let mut r = rng(10);
    for case in 0..CASES {
        let c = r.gen_range(1..=3);
        let dilation = r.gen_range(1..=3);
        let mut reg = ParamRegistry::new();
        let block = NonBottleneck1d::new(&mut reg, "nb", c, dilation, 0.2).unwrap();
        let shape = [2, c, r.gen_range(2..=5), r.gen_range(2..=5)];
        let x = [random_tensor(&mut r, &shape)];
        block_check("non_bottleneck_1d", case, &reg, &x, |ctx, v| block.forward(ctx, v[0]));
    }
}

pub fn dense_gradients() {
    let mut r = rng(11);
    for case in 0..CASES {
        let c = r.gen_range(1..=3);
        let (k, b) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let shape = [2, c, r.gen_range(2..=4), r.gen_range(2..=4)];
        let x = [random_tensor(&mut r, &shape)];

        let mut reg = ParamRegistry::new();
        let module = DenseModule::new(&mut reg, "m", c, k, b, 0.1).unwrap();
        block_check("dense_module", case, &reg, &x, |ctx, v| module.forward(ctx, v[0]));

        let mut reg = ParamRegistry::new();
        let block = DenseBlock::new(&mut reg, "d", c, r.gen_range(1..=3), k, b, 0.1).unwrap();
        block_check("dense_block", case, &reg, &x, |ctx, v| block.forward(ctx, v[0]));
    }
}

pub fn transition_gradients() {
    let mut r = rng(12);
    for case in 0..CASES {
        let (h, w) = even_hw(&mut r);
        let (cin, cout) = (r.gen_range(1..=4), r.gen_range(1..=3));
        let mut reg = ParamRegistry::new();
        let block = TransitionLayer::new(&mut reg, "tr", cin, cout).unwrap();
        let x = [random_tensor(&mut r, &[2, cin, h, w])];
        block_check("transition", case, &reg, &x, |ctx, v| block.forward(ctx, v[0]));
    }
}

pub fn fusion_gradients() {
    let mut r = rng(13);
    for case in 0..CASES {
        let (src, dst) = (r.gen_range(1..=4), r.gen_range(1..=3));
        let (n, h, w) = (r.gen_range(1..=2), r.gen_range(2..=4), r.gen_range(2..=4));
        let mut reg = ParamRegistry::new();
        let adapter = FusionAdapter::new(&mut reg, "fusion", 1, src, dst).unwrap();
        let xs = [random_tensor(&mut r, &[n, src, h, w]), random_tensor(&mut r, &[n, dst, h, w])];
        block_check("fusion_adapter", case, &reg, &xs, |ctx, v| adapter.forward(ctx, v[0], v[1]));
    }
}

pub fn decoder_stage_gradients() {
    let mut r = rng(14);
    for case in 0..CASES {
        let (cin, cout) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let mut reg = ParamRegistry::new();
        let stage = DecoderStage::new(&mut reg, "dec", cin, cout, r.gen_range(0..=2), 0.1).unwrap();
        let shape = [2, cin, r.gen_range(2..=3), r.gen_range(2..=3)];
        let x = [random_tensor(&mut r, &shape)];
        block_check("decoder_stage", case, &reg, &x, |ctx, v| stage.forward(ctx, v[0]));
    }
}

/// Every check, by name; each panics on failure.
pub const ALL: &[(&str, fn())] = &[
    ("conv2d_gradients", conv2d_gradients),
    ("conv_transpose2d_gradients", conv_transpose2d_gradients),
    ("pooling_gradients", pooling_gradients),
    ("batch_norm_gradients", batch_norm_gradients),
    ("elementwise_gradients", elementwise_gradients),
    ("channel_gradients", channel_gradients),
    ("cross_entropy_gradients", cross_entropy_gradients),
    ("layer_gradients", layer_gradients),
    ("downsampler_gradients", downsampler_gradients),
    ("non_bottleneck_gradients", non_bottleneck_gradients),
    ("dense_gradients", dense_gradients),
    ("transition_gradients", transition_gradients),
    ("fusion_gradients", fusion_gradients),
    ("decoder_stage_gradients", decoder_stage_gradients),
];
