use rand::Rng;

use super::{Accumulator, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let value = self.value(input).map(|v| if v > T::zero() { v } else { T::zero() });
        Ok(self.push(value, Op::Relu { input }, &[input]))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. With
    /// `train == false` (or a zero rate) the input handle is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::argument("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(input);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let x = self.value(input);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        Ok(self.push(value, Op::Dropout { input, mask }, &[input]))
    }

    fn check_same_shape(&self, op: &'static str, lhs: Var, rhs: Var) -> Result<()> {
        let (a, b) = (self.shape(lhs), self.shape(rhs));
        if a.len() != b.len() {
            return Err(Error::shape(op, format!("rank mismatch: {a:?} vs {b:?}")));
        }
        for (axis, (&x, &y)) in a.iter().zip(b).enumerate() {
            if x != y {
                return Err(Error::mismatch(op, format!("axis {axis}"), x, y));
            }
        }
        Ok(())
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.check_same_shape("add", lhs, rhs)?;
        let (a, b) = (self.value(lhs), self.value(rhs));
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(a.shape(), data)?;
        Ok(self.push(value, Op::Add { lhs, rhs }, &[lhs, rhs]))
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.check_same_shape("mul", lhs, rhs)?;
        let (a, b) = (self.value(lhs), self.value(rhs));
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(a.shape(), data)?;
        Ok(self.push(value, Op::Mul { lhs, rhs }, &[lhs, rhs]))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let factor = T::from_f64(factor);
        let value = self.value(input).map(|v| v * factor);
        Ok(self.push(value, Op::Scale { input, factor }, &[input]))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.value(input).data().iter().map(|v| v.as_f64()).sum::<f64>();
        let value = Tensor::scalar(T::from_f64(total));
        Ok(self.push(value, Op::Sum { input }, &[input]))
    }

    /// Concatenation along the channel axis of N×C×H×W tensors.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        const OP: &str = "concat_channels";
        let first = *inputs
            .first()
            .ok_or_else(|| Error::argument(OP, "no tensors to concatenate"))?;
        let (n, _, h, w) = self.value(first).dims4(OP)?;
        let mut total_c = 0;
        for &v in inputs {
            let (vn, vc, vh, vw) = self.value(v).dims4(OP)?;
            for (dim, expected, found) in [("batch", n, vn), ("height", h, vh), ("width", w, vw)] {
                if expected != found {
                    return Err(Error::mismatch(OP, dim, expected, found));
                }
            }
            total_c += vc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for &v in inputs {
                let t = self.value(v);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let value = Tensor::from_vec(&[n, total_c, h, w], data)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            inputs,
        ))
    }

    /// Channels `[start, start + len)`.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(input).slice_channels(start, len)?;
        Ok(self.push(value, Op::SliceChannels { input, start }, &[input]))
    }
}

pub(crate) fn relu_backward<T: Scalar>(input: Var, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let x = acc.value(input).data();
    let dx: Vec<T> = x
        .iter()
        .zip(grad)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    acc.add(input, || dx);
}

pub(crate) fn dropout_backward<T: Scalar>(input: Var, mask: &[T], grad: &[T], acc: &mut Accumulator<'_, T>) {
    acc.add(input, || grad.iter().zip(mask).map(|(&g, &m)| g * m).collect());
}

pub(crate) fn mul_backward<T: Scalar>(lhs: Var, rhs: Var, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let dl: Option<Vec<T>> = acc
        .wants(lhs)
        .then(|| acc.value(rhs).data().iter().zip(grad).map(|(&b, &g)| b * g).collect());
    let dr: Option<Vec<T>> = acc
        .wants(rhs)
        .then(|| acc.value(lhs).data().iter().zip(grad).map(|(&a, &g)| a * g).collect());
    if let Some(d) = dl {
        acc.add(lhs, || d);
    }
    if let Some(d) = dr {
        acc.add(rhs, || d);
    }
}

pub(crate) fn concat_backward<T: Scalar>(inputs: &[Var], grad: &[T], acc: &mut Accumulator<'_, T>) {
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|&v| acc.value(v).shape().to_vec()).collect();
    let n = shapes[0][0];
    let plane = shapes[0][2] * shapes[0][3];
    let total_c: usize = shapes.iter().map(|s| s[1]).sum();
    let mut offset = 0;
    for (&v, shape) in inputs.iter().zip(&shapes) {
        let c = shape[1];
        acc.add(v, || {
            let mut d = Vec::with_capacity(n * c * plane);
            for b in 0..n {
                let base = (b * total_c + offset) * plane;
                d.extend_from_slice(&grad[base..base + c * plane]);
            }
            d
        });
        offset += c;
    }
}

pub(crate) fn slice_backward<T: Scalar>(
    input: Var,
    start: usize,
    out_shape: &[usize],
    grad: &[T],
    acc: &mut Accumulator<'_, T>,
) {
    let in_c = acc.value(input).shape()[1];
    let (n, len, plane) = (out_shape[0], out_shape[1], out_shape[2] * out_shape[3]);
    acc.add(input, || {
        let mut d = vec![T::zero(); n * in_c * plane];
        for b in 0..n {
            let dst = (b * in_c + start) * plane;
            d[dst..dst + len * plane].copy_from_slice(&grad[b * len * plane..(b + 1) * len * plane]);
        }
        d
    });
}
