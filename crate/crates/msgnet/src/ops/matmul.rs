//! 2-D matrix product with f64 accumulation.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};

/// C(m x n) = A(m x k) * B(k x n), accumulating in f64.
fn matmul_f64(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for l in 0..k {
                acc += a[i * k + l] as f64 * b[l * n + j] as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    out
}

fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

impl Tape {
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let (sa, sb) = (
            inner.nodes[a.0].shape.clone(),
            inner.nodes[b.0].shape.clone(),
        );
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::shape(format!(
                "matmul: operands must be 2-D, got {sa:?} and {sb:?}"
            )));
        }
        let (m, k, k2, n) = (sa[0], sa[1], sb[0], sb[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: inner dimensions differ, {m}x{k} vs {k2}x{n}"
            )));
        }
        let rg = inner.nodes[a.0].requires_grad || inner.nodes[b.0].requires_grad;
        let data = matmul_f64(&inner.nodes[a.0].data, &inner.nodes[b.0].data, m, k, n);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "matmul: non-finite value in {m}x{n} output"
            )));
        }
        let out = inner.push_node(vec![m, n], data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[a.0].requires_grad {
                    // dA = dC * B^T
                    let bt = transpose(&nodes[b.0].data, k, n);
                    let da = matmul_f64(&d, &bt, m, n, k);
                    accumulate(grads, a.0, &da);
                }
                if nodes[b.0].requires_grad {
                    // dB = A^T * dC
                    let at = transpose(&nodes[a.0].data, m, k);
                    let db = matmul_f64(&at, &d, k, m, n);
                    accumulate(grads, b.0, &db);
                }
            }));
        }
        Ok(out)
    }
}
