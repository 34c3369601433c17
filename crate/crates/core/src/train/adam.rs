use crate::error::{Error, Result};
use crate::nn::{ParamGrads, ParamRegistry, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 term added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with bias correction. Moments are kept per registry entry and only
/// entries that received a gradient are touched.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl Adam {
    pub fn new(config: AdamConfig, registry: &ParamRegistry) -> Self {
        Self {
            config,
            step: 0,
            m: vec![None; registry.len()],
            v: vec![None; registry.len()],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> Option<&[f64]> {
        self.m.get(index)?.as_deref()
    }

    pub fn second_moment(&self, index: usize) -> Option<&[f64]> {
        self.v.get(index)?.as_deref()
    }

    pub fn step(&mut self, registry: &ParamRegistry, store: &mut ParamStore, grads: &ParamGrads, lr: f64) -> Result<()> {
        for (id, g) in grads.iter() {
            if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} contains {bad}",
                    registry.spec(id).name
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (id, g) in grads.iter() {
            if !registry.spec(id).kind.is_trainable() {
                continue;
            }
            let i = id.index();
            let n = g.numel();
            let m = self.m[i].get_or_insert_with(|| vec![0.0; n]);
            let v = self.v[i].get_or_insert_with(|| vec![0.0; n]);
            let param: &mut Tensor = store.get_mut(id);
            for (((p, &gi), mi), vi) in param.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let grad = gi as f64 + weight_decay * *p as f64;
                *mi = beta1 * *mi + (1.0 - beta1) * grad;
                *vi = beta2 * *vi + (1.0 - beta2) * grad * grad;
                let update = lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                *p = (*p as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
