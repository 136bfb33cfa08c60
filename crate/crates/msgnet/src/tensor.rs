//! Plain N-dimensional f32 tensor.
//!
//! `Tensor` is the persistent value carrier: network parameters, images in
//! tensor form, optimizer state. Differentiable computation happens on a
//! [`crate::tape::Tape`]; a `Tensor` owns its gradient buffer only when it
//! is a trainable leaf (`grad` present iff the tensor requires gradients).

use crate::error::{Error, Result};
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {} elements but data has {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = numel(&shape);
        Tensor {
            shape,
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    /// Uniform random tensor in [lo, hi), consuming draws from `rng`.
    pub fn rand_uniform(shape: Vec<usize>, rng: &mut Prng, lo: f32, hi: f32) -> Self {
        let n = numel(&shape);
        let data = (0..n).map(|_| rng.range(lo, hi)).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    /// Normal random tensor with the given standard deviation.
    pub fn rand_normal(shape: Vec<usize>, rng: &mut Prng, std: f32) -> Self {
        let n = numel(&shape);
        let data = (0..n).map(|_| rng.normal() * std).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Allocate the gradient buffer, marking the tensor trainable.
    pub fn with_grad(mut self) -> Self {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f32]> {
        self.grad.as_deref_mut()
    }

    pub fn set_grad(&mut self, grad: Vec<f32>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(format!(
                "gradient has {} elements, tensor has {}",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
