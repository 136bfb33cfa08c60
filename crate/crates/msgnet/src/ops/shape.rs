//! Shape manipulation: reshape, permute, narrow, concat, pixel shuffle.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};
use crate::tensor::numel;

/// Row-major strides for a shape.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Rearrange `data` of `shape` so that output axis `i` is input axis `perm[i]`.
fn permute_data(data: &[f32], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f32>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides = strides(&out_shape);
    let n = data.len();
    let mut out = vec![0.0; n];
    for (out_idx, slot) in out.iter_mut().enumerate() {
        let mut rem = out_idx;
        let mut in_idx = 0;
        for (axis, &os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            in_idx += coord * in_strides[perm[axis]];
        }
        *slot = data[in_idx];
    }
    (out_shape, out)
}

impl Tape {
    pub fn reshape(&self, a: Var, new_shape: &[usize]) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        if numel(new_shape) != node.numel() {
            return Err(Error::shape(format!(
                "reshape: {:?} ({} elements) cannot become {:?} ({} elements)",
                node.shape,
                node.numel(),
                new_shape,
                numel(new_shape)
            )));
        }
        let rg = node.requires_grad;
        let old_shape = node.shape.clone();
        let data = node.data.clone();
        let out = inner.push_node(new_shape.to_vec(), data, rg);
        if rg {
            let _ = old_shape; // data layout is unchanged; gradient passes through
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                accumulate(grads, a.0, &d);
            }));
        }
        Ok(out)
    }

    pub fn permute(&self, a: Var, perm: &[usize]) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        let ndim = node.shape.len();
        let mut seen = vec![false; ndim];
        if perm.len() != ndim || perm.iter().any(|&p| p >= ndim || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!(
                "permute: {perm:?} is not a permutation of {ndim} axes"
            )));
        }
        let rg = node.requires_grad;
        let (out_shape, out_data) = permute_data(&node.data, &node.shape, perm);
        let out = inner.push_node(out_shape.clone(), out_data, rg);
        if rg {
            // Inverse permutation maps gradients back.
            let mut inv = vec![0usize; ndim];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let (_, din) = permute_data(&d, &out_shape, &inv);
                accumulate(grads, a.0, &din);
            }));
        }
        Ok(out)
    }

    /// Slice `len` indices starting at `start` along `axis` (copying).
    pub fn narrow(&self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        let shape = node.shape.clone();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::shape(format!(
                "narrow: range {start}..{} invalid for axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner_sz: usize = shape[axis + 1..].iter().product();
        let axis_sz = shape[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner_sz);
        for o in 0..outer {
            let base = (o * axis_sz + start) * inner_sz;
            data.extend_from_slice(&node.data[base..base + len * inner_sz]);
        }
        let rg = node.requires_grad;
        let total = node.numel();
        let out = inner.push_node(out_shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f32; total];
                for o in 0..outer {
                    let src = o * len * inner_sz;
                    let dst = (o * axis_sz + start) * inner_sz;
                    din[dst..dst + len * inner_sz].copy_from_slice(&d[src..src + len * inner_sz]);
                }
                accumulate(grads, a.0, &din);
            }));
        }
        Ok(out)
    }

    /// Concatenate along `axis`. All other extents must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat: no operands".to_string()));
        }
        let mut inner = self.inner.borrow_mut();
        let first_shape = inner.nodes[parts[0].0].shape.clone();
        if axis >= first_shape.len() {
            return Err(Error::shape(format!(
                "concat: axis {axis} out of range for {first_shape:?}"
            )));
        }
        let mut axis_total = 0;
        let mut rg = false;
        for &p in parts {
            let n = &inner.nodes[p.0];
            let mut reduced = n.shape.clone();
            let mut reduced_first = first_shape.clone();
            reduced[axis] = 0;
            reduced_first[axis] = 0;
            if reduced != reduced_first {
                return Err(Error::shape(format!(
                    "concat: shape {:?} incompatible with {:?} along axis {axis}",
                    n.shape, first_shape
                )));
            }
            axis_total += n.shape[axis];
            rg |= n.requires_grad;
        }
        let outer: usize = first_shape[..axis].iter().product();
        let inner_sz: usize = first_shape[axis + 1..].iter().product();
        let mut out_shape = first_shape.clone();
        out_shape[axis] = axis_total;
        let mut data = vec![0.0f32; outer * axis_total * inner_sz];
        let mut offset = 0;
        let mut spans = Vec::with_capacity(parts.len());
        for &p in parts {
            let n = &inner.nodes[p.0];
            let len = n.shape[axis];
            for o in 0..outer {
                let src = o * len * inner_sz;
                let dst = (o * axis_total + offset) * inner_sz;
                data[dst..dst + len * inner_sz]
                    .copy_from_slice(&n.data[src..src + len * inner_sz]);
            }
            spans.push((p.0, offset, len));
            offset += len;
        }
        let out = inner.push_node(out_shape, data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                for &(id, off, len) in &spans {
                    if !nodes[id].requires_grad {
                        continue;
                    }
                    let mut din = vec![0.0f32; outer * len * inner_sz];
                    for o in 0..outer {
                        let src = (o * axis_total + off) * inner_sz;
                        let dst = o * len * inner_sz;
                        din[dst..dst + len * inner_sz]
                            .copy_from_slice(&d[src..src + len * inner_sz]);
                    }
                    accumulate(grads, id, &din);
                }
            }));
        }
        Ok(out)
    }

    /// Rearrange `(N, r^2*C, H, W)` into `(N, C, r*H, r*W)`: pre-shuffle
    /// channel `c*r^2 + dy*r + dx` lands at spatial offset `(dy, dx)` inside
    /// each `r x r` block of output channel `c`.
    pub fn pixel_shuffle(&self, a: Var, r: usize) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        let shape = node.shape.clone();
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "pixel_shuffle: expected NCHW input, got {shape:?}"
            )));
        }
        let (n, c_in, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if r == 0 || c_in % (r * r) != 0 {
            return Err(Error::shape(format!(
                "pixel_shuffle: channel count {c_in} not divisible by r^2 = {}",
                r * r
            )));
        }
        let c_out = c_in / (r * r);
        let (oh, ow) = (h * r, w * r);
        let rg = node.requires_grad;
        let mut data = vec![0.0f32; n * c_out * oh * ow];
        let src = &node.data;
        for ni in 0..n {
            for co in 0..c_out {
                for dy in 0..r {
                    for dx in 0..r {
                        let ci = co * r * r + dy * r + dx;
                        for y in 0..h {
                            for x in 0..w {
                                let s = ((ni * c_in + ci) * h + y) * w + x;
                                let d = ((ni * c_out + co) * oh + y * r + dy) * ow + x * r + dx;
                                data[d] = src[s];
                            }
                        }
                    }
                }
            }
        }
        let out = inner.push_node(vec![n, c_out, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f32; n * c_in * h * w];
                for ni in 0..n {
                    for co in 0..c_out {
                        for dy in 0..r {
                            for dx in 0..r {
                                let ci = co * r * r + dy * r + dx;
                                for y in 0..h {
                                    for x in 0..w {
                                        let s = ((ni * c_in + ci) * h + y) * w + x;
                                        let dd =
                                            ((ni * c_out + co) * oh + y * r + dy) * ow + x * r + dx;
                                        din[s] = d[dd];
                                    }
                                }
                            }
                        }
                    }
                }
                accumulate(grads, a.0, &din);
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_inverse_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![2, 3], (0..6).map(|i| i as f32).collect(), true);
        let y = tape.reshape(x, &[3, 2]).unwrap();
        let z = tape.reshape(y, &[2, 3]).unwrap();
        assert_eq!(tape.value(z), tape.value(x));
        assert_eq!(tape.shape(z), vec![2, 3]);
    }

    #[test]
    fn permute_transposes_matrix() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![2, 3], vec![1., 2., 3., 4., 5., 6.], true);
        let y = tape.permute(x, &[1, 0]).unwrap();
        assert_eq!(tape.shape(y), vec![3, 2]);
        assert_eq!(tape.value(y), vec![1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn permute_gradient_is_inverse_permutation() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![2, 2], vec![1., 2., 3., 4.], true);
        let y = tape.permute(x, &[1, 0]).unwrap();
        // Weighted sum picks distinct weights per output slot.
        let w = tape.leaf_parts(vec![2, 2], vec![10., 20., 30., 40.], false);
        let s = tape.sum(tape.mul(y, w).unwrap());
        tape.backward(s).unwrap();
        // y = [[1,3],[2,4]]; dL/dx[i][j] = w at transposed slot.
        assert_eq!(tape.grad(x).unwrap(), vec![10., 30., 20., 40.]);
    }

    #[test]
    fn narrow_concat_round_trip() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![2, 3], vec![1., 2., 3., 4., 5., 6.], true);
        let a = tape.narrow(x, 1, 0, 1).unwrap();
        let b = tape.narrow(x, 1, 1, 2).unwrap();
        let joined = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(joined), tape.value(x));
        let s = tape.sum(joined);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn pixel_shuffle_places_offsets() {
        // One output channel, r=2: channels 0..4 carry offsets (0,0),(0,1),(1,0),(1,1).
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 4, 1, 1], vec![1., 2., 3., 4.], true);
        let y = tape.pixel_shuffle(x, 2).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 2, 2]);
        assert_eq!(tape.value(y), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 3, 1, 1], vec![0.0; 3], false);
        assert!(tape.pixel_shuffle(x, 2).is_err());
    }
}
