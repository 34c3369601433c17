//! Plane-level image operations on `C×H×W` tensors with values in [0, 1].

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::Tensor;

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

fn dims3(t: &Tensor, op: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Data(format!("{op}: expected a C×H×W image, got shape {s:?}"))),
    }
}

/// Luminance plane `1×H×W` of a `3×H×W` RGB image.
pub fn rgb_to_luminance(rgb: &Tensor) -> Result<Tensor> {
    let (c, h, w) = dims3(rgb, "rgb_to_luminance")?;
    if c != 3 {
        return Err(Error::Data(format!("rgb_to_luminance: expected 3 channels, got {c}")));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!("rgb_to_luminance: value {v} outside [0, 1]")));
    }
    let plane = h * w;
    let d = rgb.data();
    let y = (0..plane)
        .map(|i| {
            let (r, g, b) = (d[i], d[plane + i], d[2 * plane + i]);
            // Gray pixels are returned untouched so that Y(v, v, v) == v exactly.
            if r == g && g == b {
                r
            } else {
                (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
            }
        })
        .collect();
    Tensor::from_vec(&[1, h, w], y)
}

fn source_coord(dst: usize, scale: f64, extent: usize) -> (usize, usize, f32) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(extent - 1);
    (lo, hi, (s - lo as f64) as f32)
}

/// Bilinear resize with half-pixel centers; identity at the same size.
pub fn resize_bilinear(img: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = dims3(img, "resize_bilinear")?;
    if (h, w) == (height, width) {
        return Ok(img.clone());
    }
    let ys: Vec<_> = (0..height).map(|y| source_coord(y, h as f64 / height as f64, h)).collect();
    let xs: Vec<_> = (0..width).map(|x| source_coord(x, w as f64 / width as f64, w)).collect();
    let src = img.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let p = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bottom = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[c, height, width], out)
}

fn nearest_index(dst: usize, src_extent: usize, dst_extent: usize) -> usize {
    (((dst as f64 + 0.5) * src_extent as f64 / dst_extent as f64) as usize).min(src_extent - 1)
}

/// Nearest-neighbour resize of every map in the batch.
pub fn resize_labels(labels: &LabelMap, height: usize, width: usize) -> Result<LabelMap> {
    let (n, h, w) = (labels.batch(), labels.height(), labels.width());
    if (h, w) == (height, width) {
        return Ok(labels.clone());
    }
    let ys: Vec<_> = (0..height).map(|y| nearest_index(y, h, height)).collect();
    let xs: Vec<_> = (0..width).map(|x| nearest_index(x, w, width)).collect();
    let mut out = Vec::with_capacity(n * height * width);
    for b in 0..n {
        for &y in &ys {
            out.extend(xs.iter().map(|&x| labels.get(b, y, x)));
        }
    }
    LabelMap::new(n, height, width, out)
}

/// Resizes a raw depth plane and min-max normalizes its valid pixels to [0, 1].
///
/// Pixels whose nearest source sample is 0 (no measurement) stay 0. A plane
/// with fewer than two distinct valid values becomes all zeros.
pub fn normalize_depth(raw: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = dims3(raw, "normalize_depth")?;
    if c != 1 {
        return Err(Error::Data(format!("normalize_depth: expected 1 channel, got {c}")));
    }
    let resized = resize_bilinear(raw, height, width)?;
    let src = raw.data();
    let valid: Vec<bool> = (0..height)
        .flat_map(|y| {
            let sy = nearest_index(y, h, height);
            (0..width).map(move |x| src[sy * w + nearest_index(x, w, width)] > 0.0)
        })
        .collect();
    let values = resized.data();
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for (&v, _) in values.iter().zip(&valid).filter(|(_, &ok)| ok) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    let out = values
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| {
            if ok && range > 0.0 {
                ((v - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(&[1, height, width], out)
}
