use crate::error::{Error, Result};

/// Poly learning-rate policy `base·(1 − iter/max_iters)^power`.
///
/// Iterations past `max_iters` clamp to 0.
pub fn poly_lr(base: f64, iter: usize, max_iters: usize, power: f64) -> f64 {
    if max_iters == 0 || iter >= max_iters {
        if iter > max_iters {
            log::warn!("poly_lr: iteration {iter} beyond max_iters {max_iters}; clamping to 0");
        }
        return 0.0;
    }
    base * (1.0 - iter as f64 / max_iters as f64).powf(power)
}

/// Per-class loss weights `1/ln(c + p_k)` from a label histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeightTable {
    pub c: f64,
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn compute_class_weights(histogram: &[u64], c: f64) -> Result<ClassWeightTable> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::Data("class histogram is empty".into()));
    }
    if !c.is_finite() || c <= 1.0 {
        return Err(Error::Config(format!("class weight constant c must exceed 1, got {c}")));
    }
    let frequencies: Vec<f64> = histogram.iter().map(|&n| n as f64 / total as f64).collect();
    let weights = frequencies.iter().map(|p| 1.0 / (c + p).ln()).collect();
    Ok(ClassWeightTable {
        c,
        frequencies,
        weights,
    })
}
