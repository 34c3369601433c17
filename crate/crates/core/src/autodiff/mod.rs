//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node holding its output value, the operand
//! handles and whatever intermediates its backward rule needs. `backward`
//! consumes the tape, so saved intermediates are released as soon as the
//! gradients have been produced.

mod conv;
mod elementwise;
mod loss;
mod norm;
mod pool;

pub use conv::{Conv2dParams, ConvTranspose2dParams};
pub use norm::{BatchNormMode, BatchStats};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Conv2d(conv::Conv2dSaved),
    ConvTranspose2d(conv::ConvTransposeSaved),
    MaxPool(pool::MaxPoolSaved),
    AvgPool(pool::AvgPoolSaved),
    BatchNorm(norm::BatchNormSaved<T>),
    Relu { input: Var },
    Dropout { input: Var, mask: Vec<T> },
    Add { lhs: Var, rhs: Var },
    Mul { lhs: Var, rhs: Var },
    Scale { input: Var, factor: T },
    Sum { input: Var },
    Concat { inputs: Vec<Var> },
    SliceChannels { input: Var, start: usize },
    CrossEntropy(loss::CrossEntropySaved<T>),
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Ordered record of primitive applications for one forward pass.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Records an input. Gradients are only produced for leaves with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a computed node. When no operand needs a gradient the backward
    /// record is dropped and the node behaves as a constant.
    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) to every leaf that requires a gradient.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let root = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Usage(format!("backward: {loss:?} is not on this tape")))?;
        if root.value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward: loss must be a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Usage(
                "backward: loss does not depend on any tensor that requires a gradient".into(),
            ));
        }

        let nodes = self.nodes;
        let mut pending: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut leaf_grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        pending[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(grad) = pending[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let mut acc = Accumulator {
                nodes: &nodes,
                pending: &mut pending,
            };
            match &node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        leaf_grads[idx] = Some(Tensor::from_vec(node.value.shape(), grad)?);
                    }
                }
                Op::Conv2d(saved) => conv::conv2d_backward(saved, &grad, &mut acc),
                Op::ConvTranspose2d(saved) => conv::conv_transpose2d_backward(saved, &grad, &mut acc),
                Op::MaxPool(saved) => pool::max_pool_backward(saved, &grad, &mut acc),
                Op::AvgPool(saved) => pool::avg_pool_backward(saved, &grad, &mut acc),
                Op::BatchNorm(saved) => norm::batch_norm_backward(saved, &grad, &mut acc),
                Op::Relu { input } => elementwise::relu_backward(*input, &grad, &mut acc),
                Op::Dropout { input, mask } => elementwise::dropout_backward(*input, mask, &grad, &mut acc),
                Op::Add { lhs, rhs } => {
                    acc.add(*lhs, || grad.clone());
                    acc.add(*rhs, || grad.clone());
                }
                Op::Mul { lhs, rhs } => elementwise::mul_backward(*lhs, *rhs, &grad, &mut acc),
                Op::Scale { input, factor } => acc.add(*input, || grad.iter().map(|&g| g * *factor).collect()),
                Op::Sum { input } => {
                    let n = acc.numel(*input);
                    acc.add(*input, || vec![grad[0]; n]);
                }
                Op::Concat { inputs } => elementwise::concat_backward(inputs, &grad, &mut acc),
                Op::SliceChannels { input, start } => {
                    elementwise::slice_backward(*input, *start, node.value.shape(), &grad, &mut acc)
                }
                Op::CrossEntropy(saved) => loss::cross_entropy_backward(saved, &grad, &mut acc),
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads: leaf_grads,
            shapes,
        })
    }
}

/// Gradient sink used by backward rules; skips operands that need no gradient.
pub(crate) struct Accumulator<'a, T> {
    nodes: &'a [Node<T>],
    pending: &'a mut [Option<Vec<T>>],
}

impl<T: Scalar> Accumulator<'_, T> {
    pub(crate) fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(crate) fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub(crate) fn numel(&self, var: Var) -> usize {
        self.nodes[var.0].value.numel()
    }

    pub(crate) fn add(&mut self, var: Var, contribution: impl FnOnce() -> Vec<T>) {
        if !self.wants(var) {
            return;
        }
        let delta = contribution();
        debug_assert_eq!(delta.len(), self.numel(var));
        match &mut self.pending[var.0] {
            Some(existing) => {
                for (e, d) in existing.iter_mut().zip(delta) {
                    *e = *e + d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Gradient of a leaf with unused inputs reported as zeros.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}
