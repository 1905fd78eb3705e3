//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap reference-counted handle. Every operation applied to
//! a tensor that requires gradients records a node holding its inputs and the
//! values its backward rule needs. Node ids are handed out in creation order,
//! so the recorded graph is acyclic by construction and reverse id order is a
//! valid reverse topological order for [`Tensor::backward`].
//!
//! Values are immutable once created. Only gradient buffers of leaf tensors
//! change, and only through `backward` (additive) and [`Tensor::zero_grad`].

mod backward;
mod gradcheck;
mod kernels;
mod ops;

use std::cell::{Cell, Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gradcheck::{grad_check, suite as gradient_suite};
pub use ops::{forward_op, OpKind};

pub(crate) use backward::Op;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static NO_GRAD_DEPTH: Cell<usize> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Runs `f` without recording any differentiation graph on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Guard;
    impl Drop for Guard {
        fn drop(&mut self) {
            NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
        }
    }
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    let _guard = Guard;
    f()
}

pub(crate) fn recording() -> bool {
    NO_GRAD_DEPTH.with(|d| d.get() == 0)
}

pub(crate) struct Node<T: Scalar> {
    pub(crate) op: Op<T>,
    pub(crate) inputs: Vec<Tensor<T>>,
}

struct Inner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish_non_exhaustive()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    /// Constant tensor; never accumulates a gradient.
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, false)
    }

    /// Leaf tensor that collects gradients during [`Tensor::backward`].
    pub fn parameter(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, true)
    }

    fn leaf(data: Vec<T>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::raw(data, shape.to_vec(), requires_grad, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::raw(vec![T::zero(); numel(shape)], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::raw(vec![value; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::raw(vec![value], Vec::new(), false, None)
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(crate::scalar::cast_slice(data), shape)
    }

    pub(crate) fn raw(
        data: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
        node: Option<Node<T>>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                node,
            }),
        }
    }

    /// Builds the result of an operation, attaching a graph node when any input
    /// requires gradients and recording is enabled.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        op: Op<T>,
        inputs: &[&Tensor<T>],
    ) -> Self {
        let track = recording() && inputs.iter().any(|t| t.requires_grad());
        if track {
            let node = Node {
                op,
                inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            };
            Self::raw(data, shape, true, Some(node))
        } else {
            Self::raw(data, shape, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    /// Single value of a tensor holding exactly one element.
    pub fn item(&self) -> Result<T> {
        match self.inner.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::InvalidArgument(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            ))),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    /// Accumulated gradient of a leaf, if `backward` has reached it.
    pub fn grad(&self) -> Option<Ref<'_, Vec<T>>> {
        let g = self.inner.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().expect("checked")))
        } else {
            None
        }
    }

    pub fn grad_vec(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Detached copy of the values as a new constant.
    pub fn detach(&self) -> Self {
        Self::raw(self.to_vec(), self.shape().to_vec(), false, None)
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn node(&self) -> Option<&Node<T>> {
        self.inner.node.as_ref()
    }

    /// Reverse-mode differentiation from a scalar root.
    ///
    /// Every leaf that requires gradients and is reachable from `self` gets
    /// `d self / d leaf` added to its gradient buffer. Calling `backward` twice
    /// without [`Tensor::zero_grad`] accumulates.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::InvalidArgument(
                "backward root does not participate in a differentiation graph".into(),
            ));
        }

        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = t.node() {
                for input in &node.inputs {
                    if input.requires_grad() && !seen.contains(&input.id()) {
                        stack.push(input.clone());
                    }
                }
            }
            order.push(t);
        }
        order.sort_unstable_by_key(|t| std::cmp::Reverse(t.id()));

        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        for t in order {
            let Some(upstream) = pending.remove(&t.id()) else {
                continue;
            };
            match t.node() {
                None => {
                    let mut slot = t.inner.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(g) => g.iter_mut().zip(&upstream).for_each(|(a, &b)| *a += b),
                        None => *slot = Some(upstream),
                    }
                }
                Some(node) => {
                    let input_grads = node.op.backward(&t, &node.inputs, &upstream);
                    for (input, g) in node.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
