//! The [`Tensor`] handle and the backward pass over its recorded graph.
//!
//! Every op returns a fresh tensor that keeps shared references to the
//! tensors it was computed from together with a [`BackwardOp`] that knows
//! how to push an upstream gradient onto those inputs. Calling
//! [`Tensor::backward`] on a scalar sorts the reachable graph topologically
//! and replays the ops in reverse, visiting each one exactly once.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};

/// Local derivative rule for a recorded op.
///
/// `backward` receives the op's parents, the op's own output and the
/// gradient flowing into that output. It returns one entry per parent,
/// `None` when the parent needs no gradient.
pub trait BackwardOp {
    fn name(&self) -> &'static str;

    fn backward(&self, parents: &[Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    op: Option<Box<dyn BackwardOp>>,
}

/// Reference-counted handle to a dense row-major `f64` array.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.op.as_ref().map(|op| op.name()))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl Tensor {
    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Dimension {
                op: "tensor",
                msg: format!("extents must be positive, got {shape:?}"),
            });
        }
        if numel(&shape) != data.len() {
            return Err(TensorError::Dimension {
                op: "tensor",
                msg: format!("shape {shape:?} holds {} values, got {}", numel(&shape), data.len()),
            });
        }
        check_finite("tensor", &data)?;
        Ok(Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            op: None,
        })))
    }

    /// Constant tensor (no gradient is tracked).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// Leaf tensor whose gradient is accumulated by [`Tensor::backward`].
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::leaf(vec![value; numel(shape)], shape.to_vec(), false).expect("valid constant tensor")
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1], value)
    }

    /// Records the output of an op. Fails with [`TensorError::NonFinite`]
    /// naming the op when any produced value is NaN or infinite.
    ///
    /// This is the extension point for ops defined outside this crate.
    pub fn from_op(
        name: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        op: Box<dyn BackwardOp>,
    ) -> Result<Self> {
        debug_assert_eq!(numel(&shape), data.len(), "{name}: shape/data mismatch");
        check_finite(name, &data)?;
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, op) = if requires_grad { (parents, Some(op)) } else { (Vec::new(), None) };
        Ok(Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            op,
        })))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on a tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Accumulated gradient of a leaf after [`Tensor::backward`].
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::leaf(self.0.data.clone(), self.0.shape.clone(), false).expect("detached copy of a valid tensor")
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|op| op.name())
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Reverse topological order of every node reachable from `self` that
    /// requires a gradient. This is the computation record replayed by
    /// [`Tensor::backward`].
    pub fn record(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node> = HashSet::new();
        if !self.requires_grad() {
            return order;
        }
        // Iterative post-order DFS; model graphs are deep enough to make
        // recursion risky.
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        seen.insert(Rc::as_ptr(&self.0));
        while let Some((node, next)) = stack.pop() {
            if next < node.0.parents.len() {
                let child = node.0.parents[next].clone();
                stack.push((node, next + 1));
                if child.requires_grad() && seen.insert(Rc::as_ptr(&child.0)) {
                    stack.push((child, 0));
                }
            } else {
                order.push(node);
            }
        }
        order.reverse();
        order
    }

    /// Backpropagates from a single-element tensor seeded with 1.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Dimension {
                op: "backward",
                msg: format!("needs a scalar output, got shape {:?}", self.shape()),
            });
        }
        self.backward_with(vec![1.0])
    }

    /// Backpropagates an explicit upstream gradient of the same shape.
    ///
    /// Gradients of intermediate nodes are released once consumed; leaf
    /// gradients accumulate across calls until [`Tensor::zero_grad`].
    pub fn backward_with(&self, seed: Vec<f64>) -> Result<()> {
        if seed.len() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                lhs: self.shape().to_vec(),
                rhs: vec![seed.len()],
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.record();
        accumulate(self, seed);
        for node in &order {
            let Some(op) = node.0.op.as_ref() else { continue };
            let Some(grad) = node.0.grad.borrow_mut().take() else { continue };
            let parent_grads = op.backward(&node.0.parents, node, &grad);
            debug_assert_eq!(parent_grads.len(), node.0.parents.len(), "{}", op.name());
            for (parent, g) in node.0.parents.iter().zip(parent_grads) {
                if let Some(g) = g {
                    if parent.requires_grad() {
                        if !g.iter().all(|v| v.is_finite()) {
                            return Err(TensorError::NonFinite { op: op.name() });
                        }
                        accumulate(parent, g);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(t: &Tensor, g: Vec<f64>) {
    debug_assert_eq!(g.len(), t.numel());
    let mut slot = t.0.grad.borrow_mut();
    match slot.as_mut() {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}
