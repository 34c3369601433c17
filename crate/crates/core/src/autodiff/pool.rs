use super::{Accumulator, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub(crate) struct MaxPoolSaved {
    input: Var,
    /// Flat input index selected for each output element.
    argmax: Vec<usize>,
}

pub(crate) struct AvgPoolSaved {
    input: Var,
    in_shape: [usize; 4],
    window: (usize, usize),
    stride: (usize, usize),
}

fn pooled_extent(
    op: &'static str,
    shape: (usize, usize, usize, usize),
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(usize, usize)> {
    let (_, _, h, w) = shape;
    if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::argument(op, "window and stride must be positive"));
    }
    if window.0 > h || window.1 > w {
        return Err(Error::argument(
            op,
            format!("{}x{} window larger than {h}x{w} input", window.0, window.1),
        ));
    }
    Ok(((h - window.0) / stride.0 + 1, (w - window.1) / stride.1 + 1))
}

impl<T: Scalar> Tape<T> {
    /// Window maximum; ties resolve to the first index in row-major order.
    pub fn max_pool2d(&mut self, input: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        const OP: &str = "max_pool2d";
        let dims @ (n, c, h, w) = self.value(input).dims4(OP)?;
        let (oh, ow) = pooled_extent(OP, dims, window, stride)?;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride.0 * w + ox * stride.1;
                    for ky in 0..window.0 {
                        let row = base + (oy * stride.0 + ky) * w + ox * stride.1;
                        for idx in row..row + window.1 {
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool(MaxPoolSaved { input, argmax }), &[input]))
    }

    /// Window mean, no padding.
    pub fn avg_pool2d(&mut self, input: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        const OP: &str = "avg_pool2d";
        let dims @ (n, c, h, w) = self.value(input).dims4(OP)?;
        let (oh, ow) = pooled_extent(OP, dims, window, stride)?;
        let x = self.value(input).data();
        let scale = T::from_f64(1.0 / (window.0 * window.1) as f64);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = T::zero();
                    for ky in 0..window.0 {
                        let row = base + (oy * stride.0 + ky) * w + ox * stride.1;
                        for &v in &x[row..row + window.1] {
                            sum = sum + v;
                        }
                    }
                    out.push(sum * scale);
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, oh, ow], out)?;
        let saved = AvgPoolSaved {
            input,
            in_shape: [n, c, h, w],
            window,
            stride,
        };
        Ok(self.push(value, Op::AvgPool(saved), &[input]))
    }
}

pub(crate) fn max_pool_backward<T: Scalar>(s: &MaxPoolSaved, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let numel = acc.numel(s.input);
    acc.add(s.input, || {
        let mut dx = vec![T::zero(); numel];
        for (&idx, &g) in s.argmax.iter().zip(grad) {
            dx[idx] = dx[idx] + g;
        }
        dx
    });
}

pub(crate) fn avg_pool_backward<T: Scalar>(s: &AvgPoolSaved, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let [n, c, h, w] = s.in_shape;
    let oh = (h - s.window.0) / s.stride.0 + 1;
    let ow = (w - s.window.1) / s.stride.1 + 1;
    let scale = T::from_f64(1.0 / (s.window.0 * s.window.1) as f64);
    acc.add(s.input, || {
        let mut dx = vec![T::zero(); n * c * h * w];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad[(plane * oh + oy) * ow + ox] * scale;
                    for ky in 0..s.window.0 {
                        let row = base + (oy * s.stride.0 + ky) * w + ox * s.stride.1;
                        for v in &mut dx[row..row + s.window.1] {
                            *v = *v + g;
                        }
                    }
                }
            }
        }
        dx
    });
}
