//! Reverse-mode automatic differentiation tape.
//!
//! Define-by-run: each forward operation appends its output buffer as a node
//! and, when any input requires gradients, records a backward rule. The tape
//! is rebuilt for every forward pass. `backward` replays the rules in exact
//! reverse recording order, accumulating vector-Jacobian products into
//! per-node gradient buffers.
//!
//! A tape is single-writer (`RefCell` inside, `!Sync`); independent tapes may
//! run concurrently on different threads. All reductions inside operations
//! accumulate in f64 and store f32, in a fixed iteration order, so identical
//! inputs produce bit-identical values and gradients.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a tape. Only valid for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub requires_grad: bool,
}

impl Node {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

type BackwardFn = Box<dyn Fn(&[Node], &mut [Option<Vec<f32>>])>;

struct Record {
    backward: BackwardFn,
}

pub(crate) struct TapeInner {
    pub nodes: Vec<Node>,
    pub grads: Vec<Option<Vec<f32>>>,
    records: Vec<Record>,
}

pub struct Tape {
    pub(crate) inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Add `delta` into the gradient accumulator of node `id`.
pub(crate) fn accumulate(grads: &mut [Option<Vec<f32>>], id: usize, delta: &[f32]) {
    match &mut grads[id] {
        Some(g) => {
            debug_assert_eq!(g.len(), delta.len());
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
        None => grads[id] = Some(delta.to_vec()),
    }
}

impl TapeInner {
    pub fn push_node(&mut self, shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn push_record(&mut self, backward: BackwardFn) {
        self.records.push(Record { backward });
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner {
                nodes: Vec::new(),
                grads: Vec::new(),
                records: Vec::new(),
            }),
        }
    }

    /// Register a leaf node, copying the tensor's data onto the tape.
    pub fn leaf(&self, t: &Tensor, requires_grad: bool) -> Var {
        self.leaf_parts(t.shape().to_vec(), t.data().to_vec(), requires_grad)
    }

    pub fn leaf_parts(&self, shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Var {
        self.inner
            .borrow_mut()
            .push_node(shape, data, requires_grad)
    }

    /// Register a non-differentiable constant.
    pub fn constant(&self, t: &Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.inner.borrow().nodes[v.0].shape.clone()
    }

    pub fn numel(&self, v: Var) -> usize {
        self.inner.borrow().nodes[v.0].numel()
    }

    pub fn value(&self, v: Var) -> Vec<f32> {
        self.inner.borrow().nodes[v.0].data.clone()
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> f32 {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.nodes[v.0].numel(), 1);
        inner.nodes[v.0].data[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.inner.borrow().nodes[v.0].requires_grad
    }

    /// Extract the node's value as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let inner = self.inner.borrow();
        let n = &inner.nodes[v.0];
        Tensor::new(n.shape.clone(), n.data.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a node, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<Vec<f32>> {
        self.inner.borrow().grads[v.0].clone()
    }

    /// Run the backward pass from a scalar root. Gradients accumulate: a
    /// second call without a fresh tape adds another pass worth of
    /// contributions.
    pub fn backward(&self, root: Var) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if inner.nodes[root.0].numel() != 1 {
            return Err(Error::shape(format!(
                "backward requires a scalar root, got shape {:?}",
                inner.nodes[root.0].shape
            )));
        }
        accumulate(&mut inner.grads, root.0, &[1.0]);
        let records = std::mem::take(&mut inner.records);
        {
            let TapeInner { nodes, grads, .. } = &mut *inner;
            for record in records.iter().rev() {
                (record.backward)(nodes, grads);
            }
        }
        inner.records = records;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_round_trip() {
        let tape = Tape::new();
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = tape.leaf(&t, true);
        assert_eq!(tape.shape(v), vec![2, 2]);
        assert_eq!(tape.value(v), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(tape.requires_grad(v));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let v = tape.leaf_parts(vec![2], vec![1.0, 2.0], true);
        assert!(matches!(tape.backward(v), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_on_leaf_scalar_seeds_one() {
        let tape = Tape::new();
        let v = tape.leaf_parts(vec![1], vec![3.0], true);
        tape.backward(v).unwrap();
        assert_eq!(tape.grad(v).unwrap(), vec![1.0]);
        // Repeated backward accumulates.
        tape.backward(v).unwrap();
        assert_eq!(tape.grad(v).unwrap(), vec![2.0]);
    }
}
