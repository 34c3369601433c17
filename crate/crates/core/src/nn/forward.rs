use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::autodiff::{BatchStats, Tape, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Shapes observed while executing one named layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

/// Running-statistics update produced by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats<T>,
}

/// State of one forward pass: the tape, lazily recorded parameters, dropout
/// RNG and pending batch-norm updates.
pub struct Forward<'s, T: Scalar = f32> {
    pub tape: Tape<T>,
    store: &'s ParamStore<T>,
    vars: Vec<Option<Var>>,
    mode: Mode,
    grad: bool,
    rng: ChaCha8Rng,
    bn_updates: Vec<BnUpdate<T>>,
    trace: Option<Vec<TraceEntry>>,
}

/// Parameter gradients, gradients of the requested inputs, and batch-norm updates.
pub type InputGrads<T> = (ParamGrads<T>, Vec<Tensor<T>>, Vec<BnUpdate<T>>);

impl<'s, T: Scalar> Forward<'s, T> {
    /// A pass whose parameters record gradients.
    pub fn new(store: &'s ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Self {
            tape: Tape::new(),
            store,
            vars: vec![None; store.len()],
            mode,
            grad: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
            trace: None,
        }
    }

    /// Eval-mode pass without gradient bookkeeping.
    pub fn inference(store: &'s ParamStore<T>) -> Self {
        let mut fwd = Self::new(store, Mode::Eval, 0);
        fwd.grad = false;
        fwd
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Inverted dropout in training mode, identity otherwise.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        let train = self.is_train();
        self.tape.dropout(x, rate, train, &mut self.rng)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    /// An input whose gradient can be requested from [`Forward::backward_with_inputs`].
    pub fn differentiable_input(&mut self, value: Tensor<T>) -> Var {
        self.tape.leaf(value, true)
    }

    /// Tape handle of a parameter, recorded on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone(), self.grad);
        self.vars[id.0] = Some(v);
        v
    }

    pub(crate) fn push_bn_update(&mut self, update: BnUpdate<T>) {
        self.bn_updates.push(update);
    }

    pub fn record(&mut self, name: &str, input: &[usize], output: &[usize]) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                name: name.to_string(),
                input: input.to_vec(),
                output: output.to_vec(),
            });
        }
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.take().unwrap_or_default()
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate<T>> {
        std::mem::take(&mut self.bn_updates)
    }

    /// Runs backward from `loss` and returns per-parameter gradients together
    /// with the batch-norm updates gathered during the pass.
    pub fn backward(self, loss: Var) -> Result<(ParamGrads<T>, Vec<BnUpdate<T>>)> {
        let (grads, _, updates) = self.backward_with_inputs(loss, &[])?;
        Ok((grads, updates))
    }

    /// Like [`Forward::backward`], also returning the gradient of each of `inputs`.
    pub fn backward_with_inputs(
        mut self,
        loss: Var,
        inputs: &[Var],
    ) -> Result<InputGrads<T>> {
        let updates = std::mem::take(&mut self.bn_updates);
        let vars = std::mem::take(&mut self.vars);
        let mut grads = self.tape.backward(loss)?;
        let wrt = inputs.iter().map(|&v| grads.wrt(v)).collect();
        let per_param = vars.into_iter().map(|v| v.and_then(|v| grads.take(v))).collect();
        Ok((ParamGrads { grads: per_param }, wrt, updates))
    }
}

/// Gradients indexed by [`ParamId`]; `None` for parameters the loss does not reach.
#[derive(Clone, Debug)]
pub struct ParamGrads<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale(&mut self, factor: f64) {
        let f = T::from_f64(factor);
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v = *v * f;
            }
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>], momentum: f64) {
        for u in updates {
            let mut mean = self.get(u.mean).clone();
            let mut var = self.get(u.var).clone();
            u.stats.update_running(mean.data_mut(), var.data_mut(), momentum);
            *self.get_mut(u.mean) = mean;
            *self.get_mut(u.var) = var;
        }
    }
}
