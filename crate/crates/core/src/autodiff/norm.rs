use super::{Accumulator, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Statistics source for batch normalization.
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with stored running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

/// Per-channel statistics of a training batch; `var` is the unbiased estimate
/// used for running-statistics updates.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&self, mean: &mut [T], var: &mut [T], momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        for (r, &b) in mean.iter_mut().zip(&self.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in var.iter_mut().zip(&self.var) {
            *r = keep * *r + m * b;
        }
    }
}

pub(crate) struct BatchNormSaved<T> {
    input: Var,
    gamma: Var,
    beta: Var,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    channels: usize,
    plane: usize,
    train: bool,
}

impl<T: Scalar> Tape<T> {
    /// Per-channel normalization over N, H, W followed by the affine map `gamma * x_hat + beta`.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_, T>,
        epsilon: f64,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        const OP: &str = "batch_norm";
        let (n, c, h, w) = self.value(input).dims4(OP)?;
        for (name, p) in [("gamma length", gamma), ("beta length", beta)] {
            let len = self.value(p).numel();
            if len != c {
                return Err(Error::mismatch(OP, name, c, len));
            }
        }
        let plane = h * w;
        let count = n * plane;
        if count == 0 {
            return Err(Error::argument(OP, "zero spatial extent"));
        }
        let x = self.value(input).data();
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                if count < 2 {
                    return Err(Error::argument(OP, "training mode needs at least two values per channel"));
                }
                let mut mean = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for b in 0..n {
                    for ch in 0..c {
                        let s = &x[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                        mean[ch] += s.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for b in 0..n {
                    for ch in 0..c {
                        let s = &x[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                        sq[ch] += s.iter().map(|v| (v.as_f64() - mean[ch]).powi(2)).sum::<f64>();
                    }
                }
                let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
                let stats = BatchStats {
                    mean: mean.iter().map(|&v| T::from_f64(v)).collect(),
                    var: sq.iter().map(|s| T::from_f64(s / (count - 1) as f64)).collect(),
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::mismatch(OP, "running statistics length", c, mean.len().min(var.len())));
                }
                (
                    mean.iter().map(|v| v.as_f64()).collect(),
                    var.iter().map(|v| v.as_f64()).collect(),
                    None,
                )
            }
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / (v + epsilon).sqrt())).collect();
        let mean: Vec<T> = mean.into_iter().map(T::from_f64).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut x_hat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                for ((xh, o), &v) in x_hat[range.clone()]
                    .iter_mut()
                    .zip(&mut out[range.clone()])
                    .zip(&x[range])
                {
                    *xh = (v - mean[ch]) * inv_std[ch];
                    *o = g[ch] * *xh + bt[ch];
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        let saved = BatchNormSaved {
            input,
            gamma,
            beta,
            x_hat,
            inv_std,
            channels: c,
            plane,
            train: stats.is_some(),
        };
        let var = self.push(value, Op::BatchNorm(saved), &[input, gamma, beta]);
        Ok((var, stats))
    }
}

pub(crate) fn batch_norm_backward<T: Scalar>(s: &BatchNormSaved<T>, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let c = s.channels;
    let n = grad.len() / (c * s.plane);
    let count = (n * s.plane) as f64;
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * s.plane..(b * c + ch + 1) * s.plane;
            for (&g, &xh) in grad[range.clone()].iter().zip(&s.x_hat[range]) {
                sum_g[ch] += g.as_f64();
                sum_gx[ch] += g.as_f64() * xh.as_f64();
            }
        }
    }
    acc.add(s.gamma, || sum_gx.iter().map(|&v| T::from_f64(v)).collect());
    acc.add(s.beta, || sum_g.iter().map(|&v| T::from_f64(v)).collect());
    if !acc.wants(s.input) {
        return;
    }
    let gamma = acc.value(s.gamma).data().to_vec();
    let mut dx = vec![T::zero(); grad.len()];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * s.plane..(b * c + ch + 1) * s.plane;
            let scale = gamma[ch].as_f64() * s.inv_std[ch].as_f64();
            let (mg, mgx) = (sum_g[ch] / count, sum_gx[ch] / count);
            for ((d, &g), &xh) in dx[range.clone()].iter_mut().zip(&grad[range.clone()]).zip(&s.x_hat[range]) {
                *d = if s.train {
                    T::from_f64(scale * (g.as_f64() - mg - xh.as_f64() * mgx))
                } else {
                    T::from_f64(scale * g.as_f64())
                };
            }
        }
    }
    acc.add(s.input, || dx);
}
