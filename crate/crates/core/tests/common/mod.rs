//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod gradient_suite;
pub mod oracle_suite;

use ldfnet_core::{Result, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_tensor_f32(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f32> {
    random_tensor(rng, shape).cast()
}

/// Direct-sum cross-correlation with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    stride: (usize, usize),
    pad: (usize, usize),
    dil: (usize, usize),
) -> Tensor<f64> {
    let s = x.shape();
    let k = w.shape();
    let (n, cin, h, wd) = (s[0], s[1], s[2] as isize, s[3] as isize);
    let (cout, kh, kw) = (k[0], k[2], k[3]);
    let oh = (s[2] + 2 * pad.0 - dil.0 * (kh - 1) - 1) / stride.0 + 1;
    let ow = (s[3] + 2 * pad.1 - dil.1 * (kw - 1) - 1) / stride.1 + 1;
    let mut out = Vec::with_capacity(n * cout * oh * ow);
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |t| t.data()[co]);
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride.0 + ky * dil.0) as isize - pad.0 as isize;
                                let ix = (ox * stride.1 + kx * dil.1) as isize - pad.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h || ix >= wd {
                                    continue;
                                }
                                acc += x.at4(b, ci, iy as usize, ix as usize) * w.at4(co, ci, ky, kx);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(&[n, cout, oh, ow], out).unwrap()
}

/// Scatter formulation of the transposed convolution (kernel Cin×Cout×Kh×Kw).
pub fn conv_transpose2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    stride: (usize, usize),
    pad: (usize, usize),
    out_pad: (usize, usize),
) -> Tensor<f64> {
    let s = x.shape();
    let k = w.shape();
    let (n, cin, h, wd) = (s[0], s[1], s[2], s[3]);
    let (cout, kh, kw) = (k[1], k[2], k[3]);
    let oh = (h - 1) * stride.0 + kh + out_pad.0 - 2 * pad.0;
    let ow = (wd - 1) * stride.1 + kw + out_pad.1 - 2 * pad.1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for ci in 0..cin {
            for y in 0..h {
                for x_ in 0..wd {
                    let v = x.at4(b, ci, y, x_);
                    for co in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (y * stride.0 + ky) as isize - pad.0 as isize;
                                let ox = (x_ * stride.1 + kx) as isize - pad.1 as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * cout + co) * oh + oy as usize) * ow + ox as usize] += v * w.at4(ci, co, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, cout, oh, ow], out).unwrap()
}

/// Window reduction over 2×2 stride-2 (or any) windows.
pub fn pool_oracle(x: &Tensor<f64>, window: usize, stride: usize, reduce: impl Fn(&[f64]) -> f64) -> Tensor<f64> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut vals = Vec::new();
                    for ky in 0..window {
                        for kx in 0..window {
                            vals.push(x.at4(b, ch, oy * stride + ky, ox * stride + kx));
                        }
                    }
                    out.push(reduce(&vals));
                }
            }
        }
    }
    Tensor::from_vec(&[n, c, oh, ow], out).unwrap()
}

/// Per-pixel softmax + weighted negative log-likelihood, averaged over counted pixels.
pub fn cross_entropy_oracle(logits: &Tensor<f64>, labels: &[u8], weights: &[f64], ignore: u8) -> f64 {
    let s = logits.shape();
    let (n, k, h, w) = (s[0], s[1], s[2], s[3]);
    let mut total = 0.0;
    let mut count = 0;
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let l = labels[(b * h + y) * w + x];
                if l == ignore {
                    continue;
                }
                let z: Vec<f64> = (0..k).map(|c| logits.at4(b, c, y, x)).collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                let p = z[l as usize].exp() / denom;
                total += -weights[l as usize] * p.ln();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Norm-wise relative error `||a - b|| / max(||a||, ||b||)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Compares the tape's analytic gradients with central finite differences of
/// `f` for every input. At most `max_elems` coordinates per input are probed.
/// Returns the largest norm-wise relative error over the inputs.
pub fn gradient_check<F>(inputs: &[Tensor<f64>], max_elems: usize, seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars).expect("forward");
    let grads = tape.backward(loss).expect("backward");
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = f(&mut tape, &vars).expect("forward");
        tape.value(loss).data()[0]
    };

    let mut pick = rng(seed);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let indices: Vec<usize> = if n <= max_elems {
            (0..n).collect()
        } else {
            (0..max_elems).map(|_| pick.gen_range(0..n)).collect()
        };
        let mut numeric = Vec::with_capacity(indices.len());
        let mut exact = Vec::with_capacity(indices.len());
        for &idx in &indices {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[idx] -= FD_STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
            exact.push(analytic[i].data()[idx]);
        }
        worst = worst.max(relative_error(&exact, &numeric));
    }
    worst
}

/// `sum(out * projection)` for a fixed random projection, turning any output into a scalar.
pub fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let r = tape.constant(random_tensor(&mut rng(seed), &shape));
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

/// Per-class IoU from explicit pixel sets; ignored ground-truth pixels are dropped.
pub fn class_iou_oracle(pred: &[u8], gt: &[u8], classes: usize, ignore: u8) -> Vec<Option<f64>> {
    use std::collections::BTreeSet;
    (0..classes as u8)
        .map(|c| {
            let a: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] != ignore && pred[i] == c).collect();
            let b: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
            let union = a.union(&b).count();
            (union > 0).then(|| a.intersection(&b).count() as f64 / union as f64)
        })
        .collect()
}

pub fn miou_oracle(ious: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = ious.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}
