use super::{Accumulator, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::{Scalar, Tensor};

pub(crate) struct CrossEntropySaved<T> {
    logits: Var,
    probs: Vec<T>,
    /// Per-pixel gradient scale `w[label] / count`; zero for ignored pixels.
    pixel_scale: Vec<T>,
    labels: Vec<u8>,
    classes: usize,
    plane: usize,
}

impl<T: Scalar> Tape<T> {
    /// Class-weighted softmax cross-entropy averaged over non-ignored pixels:
    /// `mean_p w[y_p] * -log softmax(z_p)[y_p]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &LabelMap,
        weights: &[T],
        ignore_index: u8,
    ) -> Result<Var> {
        const OP: &str = "weighted_cross_entropy";
        let (n, k, h, w) = self.value(logits).dims4(OP)?;
        for (dim, expected, found) in [("batch", n, labels.batch()), ("height", h, labels.height()), ("width", w, labels.width())] {
            if expected != found {
                return Err(Error::mismatch(OP, format!("label {dim}"), expected, found));
            }
        }
        if weights.len() != k {
            return Err(Error::mismatch(OP, "class weight count", k, weights.len()));
        }
        let plane = h * w;
        let label_data = labels.data();
        let mut count = 0usize;
        for (i, &l) in label_data.iter().enumerate() {
            if l == ignore_index {
                continue;
            }
            if usize::from(l) >= k {
                let (b, rest) = (i / plane, i % plane);
                return Err(Error::Data(format!(
                    "label {l} at (n={b}, y={}, x={}) is outside 0..{k} and is not the ignore value {ignore_index}",
                    rest / w,
                    rest % w
                )));
            }
            count += 1;
        }

        let z = self.value(logits).data();
        let mut probs = vec![T::zero(); z.len()];
        let mut pixel_scale = vec![T::zero(); n * plane];
        let mut total = 0.0f64;
        let inv_count = if count > 0 { 1.0 / count as f64 } else { 0.0 };
        let mut row = vec![0.0f64; k];
        for b in 0..n {
            for p in 0..plane {
                let at = |c: usize| (b * k + c) * plane + p;
                let mut max = f64::NEG_INFINITY;
                for (c, r) in row.iter_mut().enumerate() {
                    *r = z[at(c)].as_f64();
                    max = max.max(*r);
                }
                let mut denom = 0.0;
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    denom += *r;
                }
                for (c, r) in row.iter().enumerate() {
                    probs[at(c)] = T::from_f64(r / denom);
                }
                let l = label_data[b * plane + p];
                if l == ignore_index {
                    continue;
                }
                let l = usize::from(l);
                let wl = weights[l].as_f64();
                let log_prob = (z[at(l)].as_f64() - max) - denom.ln();
                total += -wl * log_prob;
                pixel_scale[b * plane + p] = T::from_f64(wl * inv_count);
            }
        }
        let value = Tensor::scalar(T::from_f64(total * inv_count));
        let saved = CrossEntropySaved {
            logits,
            probs,
            pixel_scale,
            labels: label_data.to_vec(),
            classes: k,
            plane,
        };
        Ok(self.push(value, Op::CrossEntropy(saved), &[logits]))
    }
}

pub(crate) fn cross_entropy_backward<T: Scalar>(s: &CrossEntropySaved<T>, grad: &[T], acc: &mut Accumulator<'_, T>) {
    let upstream = grad[0];
    acc.add(s.logits, || {
        let mut d = vec![T::zero(); s.probs.len()];
        for (i, (&scale, &label)) in s.pixel_scale.iter().zip(&s.labels).enumerate() {
            if scale == T::zero() {
                continue;
            }
            let (b, p) = (i / s.plane, i % s.plane);
            for c in 0..s.classes {
                let idx = (b * s.classes + c) * s.plane + p;
                let target = if usize::from(label) == c { T::one() } else { T::zero() };
                d[idx] = upstream * scale * (s.probs[idx] - target);
            }
        }
        d
    });
}
