//! Instance normalization: per-sample, per-channel standardization over the
//! spatial extent, with learnable affine parameters.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};

impl Tape {
    /// `out[n,c] = gamma[c] * (x[n,c] - mean) / sqrt(var + eps) + beta[c]`,
    /// statistics taken over each channel's H*W positions with the biased
    /// (population) variance.
    pub fn instance_norm(&self, input: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::shape("instance_norm: epsilon must be positive"));
        }
        let mut inner = self.inner.borrow_mut();
        let shape = inner.nodes[input.0].shape.clone();
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "instance_norm: expected NCHW input, got {shape:?}"
            )));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            let s = &inner.nodes[v.0].shape;
            if s.as_slice() != [c] {
                return Err(Error::shape(format!(
                    "instance_norm: {name} shape {s:?} does not match {c} channels"
                )));
            }
        }
        let m = h * w;
        let rg = inner.nodes[input.0].requires_grad
            || inner.nodes[gamma.0].requires_grad
            || inner.nodes[beta.0].requires_grad;
        let mut data = vec![0.0f32; n * c * m];
        // Saved statistics for the backward pass: per (n, c) mean and inverse
        // standard deviation.
        let mut means = vec![0.0f64; n * c];
        let mut inv_stds = vec![0.0f64; n * c];
        for ni in 0..n {
            for cc in 0..c {
                let plane = &inner.nodes[input.0].data[(ni * c + cc) * m..][..m];
                let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / m as f64;
                let var = plane
                    .iter()
                    .map(|&v| (v as f64 - mean) * (v as f64 - mean))
                    .sum::<f64>()
                    / m as f64;
                let inv_std = 1.0 / (var + eps as f64).sqrt();
                means[ni * c + cc] = mean;
                inv_stds[ni * c + cc] = inv_std;
                let g = inner.nodes[gamma.0].data[cc] as f64;
                let b = inner.nodes[beta.0].data[cc] as f64;
                let dst = &mut data[(ni * c + cc) * m..][..m];
                for (d, &x) in dst.iter_mut().zip(plane.iter()) {
                    *d = (g * (x as f64 - mean) * inv_std + b) as f32;
                }
            }
        }
        let out = inner.push_node(shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let x = &nodes[input.0].data;
                let g = &nodes[gamma.0].data;
                let want_input = nodes[input.0].requires_grad;
                let want_gamma = nodes[gamma.0].requires_grad;
                let want_beta = nodes[beta.0].requires_grad;
                let mut din = if want_input {
                    vec![0.0f32; n * c * m]
                } else {
                    Vec::new()
                };
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                for ni in 0..n {
                    for cc in 0..c {
                        let idx = ni * c + cc;
                        let mean = means[idx];
                        let inv_std = inv_stds[idx];
                        let plane = &x[idx * m..][..m];
                        let dplane = &d[idx * m..][..m];
                        let mut sum_dy = 0.0f64;
                        let mut sum_dy_xhat = 0.0f64;
                        for (&dy, &xv) in dplane.iter().zip(plane.iter()) {
                            let xhat = (xv as f64 - mean) * inv_std;
                            sum_dy += dy as f64;
                            sum_dy_xhat += dy as f64 * xhat;
                        }
                        dbeta[cc] += sum_dy;
                        dgamma[cc] += sum_dy_xhat;
                        if want_input {
                            let gc = g[cc] as f64;
                            let mean_dy = sum_dy / m as f64;
                            let mean_dy_xhat = sum_dy_xhat / m as f64;
                            let dst = &mut din[idx * m..][..m];
                            for ((dd, &dy), &xv) in
                                dst.iter_mut().zip(dplane.iter()).zip(plane.iter())
                            {
                                let xhat = (xv as f64 - mean) * inv_std;
                                *dd = (gc
                                    * inv_std
                                    * (dy as f64 - mean_dy - xhat * mean_dy_xhat))
                                    as f32;
                            }
                        }
                    }
                }
                if want_input {
                    accumulate(grads, input.0, &din);
                }
                if want_gamma {
                    let dg: Vec<f32> = dgamma.iter().map(|&v| v as f32).collect();
                    accumulate(grads, gamma.0, &dg);
                }
                if want_beta {
                    let db: Vec<f32> = dbeta.iter().map(|&v| v as f32).collect();
                    accumulate(grads, beta.0, &db);
                }
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f32 = 1e-5;

    #[test]
    fn constant_channel_maps_to_zero() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![0.7; 4], false);
        let gamma = tape.leaf_parts(vec![1], vec![1.0], false);
        let beta = tape.leaf_parts(vec![1], vec![0.0], false);
        let y = tape.instance_norm(x, gamma, beta, EPS).unwrap();
        for v in tape.value(y) {
            assert!(v.abs() <= 1e-3, "expected ~0, got {v}");
        }
    }

    #[test]
    fn normalizes_mean_and_variance() {
        let tape = Tape::new();
        let data = vec![0.3, -1.2, 2.4, 0.9, -0.5, 1.7, 0.1, -2.0];
        let x = tape.leaf_parts(vec![1, 2, 2, 2], data, false);
        let gamma = tape.leaf_parts(vec![2], vec![1.0, 1.0], false);
        let beta = tape.leaf_parts(vec![2], vec![0.0, 0.0], false);
        let y = tape.instance_norm(x, gamma, beta, EPS).unwrap();
        let out = tape.value(y);
        for ch in 0..2 {
            let plane = &out[ch * 4..(ch + 1) * 4];
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / 4.0;
            let var = plane
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / 4.0;
            assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
            // Output variance is var/(var+eps), slightly below 1.
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn zero_gamma_yields_beta() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 2, 1, 2], vec![5.0, -3.0, 2.0, 8.0], false);
        let gamma = tape.leaf_parts(vec![2], vec![0.0, 0.0], false);
        let beta = tape.leaf_parts(vec![2], vec![0.25, -0.75], false);
        let y = tape.instance_norm(x, gamma, beta, EPS).unwrap();
        assert_eq!(tape.value(y), vec![0.25, 0.25, -0.75, -0.75]);
    }

    #[test]
    fn gamma_beta_shape_checked() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 2, 1, 1], vec![1.0, 2.0], false);
        let gamma = tape.leaf_parts(vec![3], vec![1.0; 3], false);
        let beta = tape.leaf_parts(vec![2], vec![0.0; 2], false);
        assert!(tape.instance_norm(x, gamma, beta, EPS).is_err());
    }
}
