use rand::Rng;

use crate::data::Sample;
use crate::error::Result;
use crate::labels::{LabelMap, IGNORE_INDEX};
use crate::tensor::Tensor;

pub const MAX_SHIFT: usize = 2;

/// One augmentation decision: optional horizontal flip, then an integer shift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augmentation {
    pub flip: bool,
    /// Output `(r, c)` takes input `(r − dy, c − dx)`.
    pub dy: isize,
    pub dx: isize,
}

impl Augmentation {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let mut shift = || {
            let magnitude = rng.gen_range(0..=MAX_SHIFT) as isize;
            if rng.gen_bool(0.5) {
                -magnitude
            } else {
                magnitude
            }
        };
        let (dy, dx) = (shift(), shift());
        Self {
            flip: rng.gen_bool(0.5),
            dy,
            dx,
        }
    }

    fn source(&self, y: usize, x: usize, h: usize, w: usize) -> Option<usize> {
        let sy = y as isize - self.dy;
        let sx = x as isize - self.dx;
        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
            return None;
        }
        let sx = if self.flip { w - 1 - sx as usize } else { sx as usize };
        Some(sy as usize * w + sx)
    }

    fn image(&self, t: &Tensor) -> Result<Tensor> {
        let [c, h, w] = t.shape()[..] else {
            unreachable!("sample planes are C×H×W")
        };
        let src = t.data();
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            let p = &src[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    if let Some(i) = self.source(y, x, h, w) {
                        out[ch * h * w + y * w + x] = p[i];
                    }
                }
            }
        }
        Tensor::from_vec(&[c, h, w], out)
    }

    fn labels(&self, l: &LabelMap) -> Result<LabelMap> {
        let (h, w) = (l.height(), l.width());
        let src = l.data();
        let out = (0..h * w)
            .map(|i| self.source(i / w, i % w, h, w).map_or(IGNORE_INDEX, |j| src[j]))
            .collect();
        LabelMap::new(1, h, w, out)
    }

    /// Applies the same transform to every plane of a sample.
    pub fn apply(&self, s: &Sample) -> Result<Sample> {
        Ok(Sample {
            rgb: self.image(&s.rgb)?,
            depth: self.image(&s.depth)?,
            luminance: self.image(&s.luminance)?,
            labels: self.labels(&s.labels)?,
        })
    }
}

/// Draws an augmentation and applies it.
pub fn augment(sample: &Sample, rng: &mut impl Rng) -> Result<Sample> {
    Augmentation::sample(rng).apply(sample)
}
