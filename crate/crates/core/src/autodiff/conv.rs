use std::borrow::Cow;

use rayon::prelude::*;

use super::{Accumulator, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor};

/// Geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub dilation: (usize, usize),
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: (0, 0),
            dilation: (1, 1),
        }
    }
}

impl Conv2dParams {
    pub fn new(stride: (usize, usize), padding: (usize, usize), dilation: (usize, usize)) -> Self {
        Self {
            stride,
            padding,
            dilation,
        }
    }

    /// Output extent along one axis, or `None` when the dilated kernel does not fit.
    pub fn output_extent(input: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> Option<usize> {
        let span = dilation * (kernel - 1) + 1;
        let padded = input + 2 * padding;
        (padded >= span && stride > 0).then(|| (padded - span) / stride + 1)
    }

    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        Some((
            Self::output_extent(h, kh, self.stride.0, self.padding.0, self.dilation.0)?,
            Self::output_extent(w, kw, self.stride.1, self.padding.1, self.dilation.1)?,
        ))
    }
}

/// Geometry of a 2-D transposed convolution (the adjoint of [`Conv2dParams`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvTranspose2dParams {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub output_padding: (usize, usize),
}

impl Default for ConvTranspose2dParams {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: (0, 0),
            output_padding: (0, 0),
        }
    }
}

impl ConvTranspose2dParams {
    pub fn new(stride: (usize, usize), padding: (usize, usize), output_padding: (usize, usize)) -> Self {
        Self {
            stride,
            padding,
            output_padding,
        }
    }

    pub fn output_extent(input: usize, kernel: usize, stride: usize, padding: usize, output_padding: usize) -> Option<usize> {
        ((input - 1) * stride + kernel + output_padding).checked_sub(2 * padding).filter(|&v| v > 0)
    }

    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        Some((
            Self::output_extent(h, kh, self.stride.0, self.padding.0, self.output_padding.0)?,
            Self::output_extent(w, kw, self.stride.1, self.padding.1, self.output_padding.1)?,
        ))
    }
}

/// Unfolding of an image into the column matrix of a convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Im2Col {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    dh: usize,
    dw: usize,
    oh: usize,
    ow: usize,
}

impl Im2Col {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_identity(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Valid output-column range `[lo, hi)` for kernel column offset `kj`.
    fn x_range(&self, kj: usize) -> (usize, usize) {
        let off = (kj * self.dw) as isize - self.pw as isize;
        let sw = self.sw as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + sw - 1) / sw };
        let last = self.w as isize - 1 - off;
        let hi = if last < 0 { 0 } else { last / sw + 1 };
        let lo = (lo as usize).min(self.ow);
        let hi = (hi as usize).min(self.ow).max(lo);
        (lo, hi)
    }

    fn unfold<'a, T: Scalar>(&self, img: &'a [T]) -> Cow<'a, [T]> {
        if self.is_identity() {
            return Cow::Borrowed(img);
        }
        let mut cols = vec![T::zero(); self.rows() * self.cols()];
        self.im2col(img, &mut cols);
        Cow::Owned(cols)
    }

    fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T]) {
        let (ohw, plane) = (self.cols(), self.h * self.w);
        for ci in 0..self.c {
            let src = &img[ci * plane..(ci + 1) * plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * ohw..(row + 1) * ohw];
                    let (lo, hi) = self.x_range(kj);
                    let xoff = (kj * self.dw) as isize - self.pw as isize;
                    for oy in 0..self.oh {
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * self.sh + ki * self.dh) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h as isize || lo == hi {
                            line.fill(T::zero());
                            continue;
                        }
                        let srow = &src[iy as usize * self.w..(iy as usize + 1) * self.w];
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        let start = (lo as isize * self.sw as isize + xoff) as usize;
                        if self.sw == 1 {
                            line[lo..hi].copy_from_slice(&srow[start..start + (hi - lo)]);
                        } else {
                            for (k, v) in line[lo..hi].iter_mut().enumerate() {
                                *v = srow[start + k * self.sw];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adds the column matrix back onto the image (adjoint of `im2col`).
    fn col2im<T: Scalar>(&self, cols: &[T], img: &mut [T]) {
        if self.is_identity() {
            for (d, s) in img.iter_mut().zip(cols) {
                *d = *d + *s;
            }
            return;
        }
        let (ohw, plane) = (self.cols(), self.h * self.w);
        for ci in 0..self.c {
            let dst = &mut img[ci * plane..(ci + 1) * plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * ohw..(row + 1) * ohw];
                    let (lo, hi) = self.x_range(kj);
                    if lo == hi {
                        continue;
                    }
                    let xoff = (kj * self.dw) as isize - self.pw as isize;
                    for oy in 0..self.oh {
                        let iy = (oy * self.sh + ki * self.dh) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let line = &src[oy * self.ow..(oy + 1) * self.ow];
                        let start = (lo as isize * self.sw as isize + xoff) as usize;
                        for (k, &v) in line[lo..hi].iter().enumerate() {
                            let x = start + k * self.sw;
                            drow[x] = drow[x] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct Conv2dSaved {
    input: Var,
    kernel: Var,
    bias: Option<Var>,
    geom: Im2Col,
    batch: usize,
    out_ch: usize,
}

pub(crate) struct ConvTransposeSaved {
    input: Var,
    kernel: Var,
    bias: Option<Var>,
    /// Unfolding of the *output* image onto the input grid.
    geom: Im2Col,
    batch: usize,
    in_ch: usize,
}

fn check_bias<T: Scalar>(tape: &Tape<T>, op: &'static str, bias: Option<Var>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        let len = tape.value(b).numel();
        if len != channels {
            return Err(Error::mismatch(op, "bias length", channels, len));
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        for v in chunk {
            *v = *v + b;
        }
    }
}

fn bias_grad<T: Scalar>(grad: &[T], batch: usize, channels: usize) -> Vec<T> {
    let plane = grad.len() / (batch * channels);
    let mut out = vec![0.0f64; channels];
    for (i, chunk) in grad.chunks(plane).enumerate() {
        out[i % channels] += chunk.iter().map(|v| v.as_f64()).sum::<f64>();
    }
    out.into_iter().map(T::from_f64).collect()
}

/// Sums per-sample partial results in a fixed order so the result does not
/// depend on how the samples were scheduled.
fn ordered_sum<T: Scalar>(parts: Vec<Vec<T>>) -> Vec<T> {
    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_default();
    for part in iter {
        for (t, p) in total.iter_mut().zip(part) {
            *t = *t + p;
        }
    }
    total
}

impl<T: Scalar> Tape<T> {
    /// 2-D cross-correlation with zero padding.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, params: Conv2dParams) -> Result<Var> {
        const OP: &str = "conv2d";
        let (n, cin, h, w) = self.value(input).dims4(OP)?;
        let (cout, kcin, kh, kw) = self.value(kernel).dims4(OP)?;
        if kcin != cin {
            return Err(Error::mismatch(OP, "input channels", kcin, cin));
        }
        let Conv2dParams {
            stride: (sh, sw),
            padding: (ph, pw),
            dilation: (dh, dw),
        } = params;
        if sh == 0 || sw == 0 {
            return Err(Error::argument(OP, format!("stride must be positive, got ({sh}, {sw})")));
        }
        if dh == 0 || dw == 0 {
            return Err(Error::argument(OP, format!("dilation must be positive, got ({dh}, {dw})")));
        }
        check_bias(self, OP, bias, cout)?;
        let Some((oh, ow)) = params.output_hw(h, w, kh, kw) else {
            return Err(Error::shape(
                OP,
                format!("dilated {kh}x{kw} kernel does not fit padded {h}x{w} input"),
            ));
        };
        let geom = Im2Col {
            c: cin,
            h,
            w,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            dh,
            dw,
            oh,
            ow,
        };
        let x = self.value(input).data();
        let wk = self.value(kernel).data();
        let (ckk, ohw) = (geom.rows(), geom.cols());
        let mut out = vec![T::zero(); n * cout * ohw];
        out.par_chunks_mut(cout * ohw).enumerate().for_each(|(b, dst)| {
            let cols = geom.unfold(&x[b * cin * h * w..(b + 1) * cin * h * w]);
            gemm(cout, ckk, ohw, wk, false, &cols, false, T::zero(), dst);
        });
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv).data(), ohw);
        }
        let value = Tensor::from_vec(&[n, cout, oh, ow], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        let saved = Conv2dSaved {
            input,
            kernel,
            bias,
            geom,
            batch: n,
            out_ch: cout,
        };
        Ok(self.push(value, Op::Conv2d(saved), &inputs))
    }

    /// Transposed convolution with kernel layout Cin×Cout×Kh×Kw.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        params: ConvTranspose2dParams,
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let (n, cin, h, w) = self.value(input).dims4(OP)?;
        let (kcin, cout, kh, kw) = self.value(kernel).dims4(OP)?;
        if kcin != cin {
            return Err(Error::mismatch(OP, "input channels", kcin, cin));
        }
        let ConvTranspose2dParams {
            stride: (sh, sw),
            padding: (ph, pw),
            output_padding: (oph, opw),
        } = params;
        if sh == 0 || sw == 0 {
            return Err(Error::argument(OP, format!("stride must be positive, got ({sh}, {sw})")));
        }
        if oph >= sh || opw >= sw {
            return Err(Error::argument(OP, "output padding must be smaller than stride"));
        }
        check_bias(self, OP, bias, cout)?;
        let Some((oh, ow)) = params.output_hw(h, w, kh, kw) else {
            return Err(Error::shape(OP, format!("padding ({ph}, {pw}) removes the whole output")));
        };
        let geom = Im2Col {
            c: cout,
            h: oh,
            w: ow,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            dh: 1,
            dw: 1,
            oh: h,
            ow: w,
        };
        let x = self.value(input).data();
        let wk = self.value(kernel).data();
        let (ckk, hw) = (geom.rows(), geom.cols());
        let mut out = vec![T::zero(); n * cout * oh * ow];
        out.par_chunks_mut(cout * oh * ow).enumerate().for_each(|(b, dst)| {
            let mut cols = vec![T::zero(); ckk * hw];
            gemm(ckk, cin, hw, wk, true, &x[b * cin * hw..(b + 1) * cin * hw], false, T::zero(), &mut cols);
            geom.col2im(&cols, dst);
        });
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv).data(), oh * ow);
        }
        let value = Tensor::from_vec(&[n, cout, oh, ow], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        let saved = ConvTransposeSaved {
            input,
            kernel,
            bias,
            geom,
            batch: n,
            in_ch: cin,
        };
        Ok(self.push(value, Op::ConvTranspose2d(saved), &inputs))
    }
}

pub(crate) fn conv2d_backward<T: Scalar>(s: &Conv2dSaved, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let g = s.geom;
    let (ckk, ohw, cout, n) = (g.rows(), g.cols(), s.out_ch, s.batch);
    let in_plane = g.c * g.h * g.w;
    if let Some(b) = s.bias {
        acc.add(b, || bias_grad(grad, n, cout));
    }
    if acc.wants(s.kernel) {
        let x = acc.value(s.input).data();
        let parts: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|b| {
                let cols = g.unfold(&x[b * in_plane..(b + 1) * in_plane]);
                let mut dw = vec![T::zero(); cout * ckk];
                gemm(cout, ohw, ckk, &grad[b * cout * ohw..(b + 1) * cout * ohw], false, &cols, true, T::zero(), &mut dw);
                dw
            })
            .collect();
        acc.add(s.kernel, || ordered_sum(parts));
    }
    if acc.wants(s.input) {
        let wk = acc.value(s.kernel).data();
        let mut dx = vec![T::zero(); n * in_plane];
        dx.par_chunks_mut(in_plane).enumerate().for_each(|(b, dst)| {
            let gout = &grad[b * cout * ohw..(b + 1) * cout * ohw];
            if g.is_identity() {
                gemm(ckk, cout, ohw, wk, true, gout, false, T::zero(), dst);
            } else {
                let mut cols = vec![T::zero(); ckk * ohw];
                gemm(ckk, cout, ohw, wk, true, gout, false, T::zero(), &mut cols);
                g.col2im(&cols, dst);
            }
        });
        acc.add(s.input, || dx);
    }
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(s: &ConvTransposeSaved, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let g = s.geom;
    let (ckk, hw, cin, n) = (g.rows(), g.cols(), s.in_ch, s.batch);
    let out_plane = g.c * g.h * g.w;
    if let Some(b) = s.bias {
        acc.add(b, || bias_grad(grad, n, g.c));
    }
    let need_w = acc.wants(s.kernel);
    let need_x = acc.wants(s.input);
    if !need_w && !need_x {
        return;
    }
    let x = acc.value(s.input).data();
    let wk = acc.value(s.kernel).data();
    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let gcols = g.unfold(&grad[b * out_plane..(b + 1) * out_plane]);
            let mut dx = Vec::new();
            if need_x {
                dx = vec![T::zero(); cin * hw];
                gemm(cin, ckk, hw, wk, false, &gcols, false, T::zero(), &mut dx);
            }
            let mut dw = Vec::new();
            if need_w {
                dw = vec![T::zero(); cin * ckk];
                gemm(cin, hw, ckk, &x[b * cin * hw..(b + 1) * cin * hw], false, &gcols, true, T::zero(), &mut dw);
            }
            (dx, dw)
        })
        .collect();
    let (dxs, dws): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    if need_x {
        acc.add(s.input, || dxs.concat());
    }
    if need_w {
        acc.add(s.kernel, || ordered_sum(dws));
    }
}
