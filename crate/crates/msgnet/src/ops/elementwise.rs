//! Elementwise arithmetic, ReLU and global reductions.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};

impl Tape {
    fn binary_shapes(&self, op: &str, a: Var, b: Var) -> Result<(Vec<usize>, bool)> {
        let inner = self.inner.borrow();
        let (na, nb) = (&inner.nodes[a.0], &inner.nodes[b.0]);
        if na.shape != nb.shape {
            return Err(Error::shape(format!(
                "{op}: operand shapes differ, {:?} vs {:?}",
                na.shape, nb.shape
            )));
        }
        Ok((na.shape.clone(), na.requires_grad || nb.requires_grad))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (shape, rg) = self.binary_shapes("add", a, b)?;
        let mut inner = self.inner.borrow_mut();
        let data: Vec<f32> = inner.nodes[a.0]
            .data
            .iter()
            .zip(&inner.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[a.0].requires_grad {
                    accumulate(grads, a.0, &d);
                }
                if nodes[b.0].requires_grad {
                    accumulate(grads, b.0, &d);
                }
            }));
        }
        Ok(out)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (shape, rg) = self.binary_shapes("sub", a, b)?;
        let mut inner = self.inner.borrow_mut();
        let data: Vec<f32> = inner.nodes[a.0]
            .data
            .iter()
            .zip(&inner.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[a.0].requires_grad {
                    accumulate(grads, a.0, &d);
                }
                if nodes[b.0].requires_grad {
                    let neg: Vec<f32> = d.iter().map(|v| -v).collect();
                    accumulate(grads, b.0, &neg);
                }
            }));
        }
        Ok(out)
    }

    /// Elementwise product. Both operands may be the same node; gradient
    /// contributions accumulate, so `mul(x, x)` differentiates as `x^2`.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (shape, rg) = self.binary_shapes("mul", a, b)?;
        let mut inner = self.inner.borrow_mut();
        let data: Vec<f32> = inner.nodes[a.0]
            .data
            .iter()
            .zip(&inner.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[a.0].requires_grad {
                    let da: Vec<f32> = d
                        .iter()
                        .zip(&nodes[b.0].data)
                        .map(|(di, bi)| di * bi)
                        .collect();
                    accumulate(grads, a.0, &da);
                }
                if nodes[b.0].requires_grad {
                    let db: Vec<f32> = d
                        .iter()
                        .zip(&nodes[a.0].data)
                        .map(|(di, ai)| di * ai)
                        .collect();
                    accumulate(grads, b.0, &db);
                }
            }));
        }
        Ok(out)
    }

    pub fn mul_scalar(&self, a: Var, c: f32) -> Var {
        let mut inner = self.inner.borrow_mut();
        let rg = inner.nodes[a.0].requires_grad;
        let shape = inner.nodes[a.0].shape.clone();
        let data: Vec<f32> = inner.nodes[a.0].data.iter().map(|x| x * c).collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let da: Vec<f32> = d.iter().map(|v| v * c).collect();
                accumulate(grads, a.0, &da);
            }));
        }
        out
    }

    pub fn div_scalar(&self, a: Var, c: f32) -> Var {
        let mut inner = self.inner.borrow_mut();
        let rg = inner.nodes[a.0].requires_grad;
        let shape = inner.nodes[a.0].shape.clone();
        let data: Vec<f32> = inner.nodes[a.0].data.iter().map(|x| x / c).collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let da: Vec<f32> = d.iter().map(|v| v / c).collect();
                accumulate(grads, a.0, &da);
            }));
        }
        out
    }

    pub fn relu(&self, a: Var) -> Var {
        let mut inner = self.inner.borrow_mut();
        let rg = inner.nodes[a.0].requires_grad;
        let shape = inner.nodes[a.0].shape.clone();
        let data: Vec<f32> = inner.nodes[a.0].data.iter().map(|x| x.max(0.0)).collect();
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let da: Vec<f32> = d
                    .iter()
                    .zip(&nodes[a.0].data)
                    .map(|(di, xi)| if *xi > 0.0 { *di } else { 0.0 })
                    .collect();
                accumulate(grads, a.0, &da);
            }));
        }
        out
    }

    /// Sum of all elements (f64 accumulator), producing a scalar node.
    pub fn sum(&self, a: Var) -> Var {
        let mut inner = self.inner.borrow_mut();
        let rg = inner.nodes[a.0].requires_grad;
        let total: f64 = inner.nodes[a.0].data.iter().map(|&x| x as f64).sum();
        let n = inner.nodes[a.0].numel();
        let out = inner.push_node(vec![1], vec![total as f32], rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                accumulate(grads, a.0, &vec![d[0]; n]);
            }));
        }
        out
    }

    /// Mean of all elements (f64 accumulator), producing a scalar node.
    pub fn mean(&self, a: Var) -> Var {
        let mut inner = self.inner.borrow_mut();
        let rg = inner.nodes[a.0].requires_grad;
        let n = inner.nodes[a.0].numel();
        let total: f64 = inner.nodes[a.0].data.iter().map(|&x| x as f64).sum();
        let out = inner.push_node(vec![1], vec![(total / n as f64) as f32], rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                accumulate(grads, a.0, &vec![d[0] / n as f32; n]);
            }));
        }
        out
    }

    /// Squared Frobenius distance `sum((a - b)^2)` as a composed graph.
    pub fn sq_dist(&self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.sum(sq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn leaf(tape: &Tape, data: Vec<f32>) -> Var {
        let n = data.len();
        tape.leaf_parts(vec![n], data, true)
    }

    #[test]
    fn relu_values() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![-1.0, 2.0, 0.0]);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn add_shape_mismatch_is_error() {
        let tape = Tape::new();
        let a = tape.leaf_parts(vec![2], vec![1.0, 2.0], true);
        let b = tape.leaf_parts(vec![3], vec![1.0, 2.0, 3.0], true);
        assert!(matches!(tape.add(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![1.0, -2.0, 3.0, 0.5]);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn half_square_sum_gradient_is_x() {
        // root = sum(x*x)/2 has gradient x.
        let tape = Tape::new();
        let data = vec![0.5, -1.5, 2.0];
        let x = leaf(&tape, data.clone());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let half = tape.mul_scalar(s, 0.5);
        tape.backward(half).unwrap();
        let g = tape.grad(x).unwrap();
        for (gi, xi) in g.iter().zip(&data) {
            assert!((gi - xi).abs() < 1e-6);
        }
    }

    #[test]
    fn chained_ops_accumulate_gradients() {
        // out = sum(a*b + a) -> da = b + 1, db = a.
        let tape = Tape::new();
        let a = leaf(&tape, vec![3.0]);
        let b = leaf(&tape, vec![5.0]);
        let prod = tape.mul(a, b).unwrap();
        let s = tape.add(prod, a).unwrap();
        let root = tape.sum(s);
        tape.backward(root).unwrap();
        assert_eq!(tape.grad(a).unwrap(), vec![6.0]);
        assert_eq!(tape.grad(b).unwrap(), vec![3.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let a = leaf(&tape, vec![1.0, 2.0]);
        let c = tape.constant(&Tensor::new(vec![2], vec![10.0, 20.0]).unwrap());
        let s = tape.sum(tape.mul(a, c).unwrap());
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), vec![10.0, 20.0]);
        assert!(tape.grad(c).is_none());
    }
}
