//! Reflection and zero padding for NCHW tensors.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};

/// Mirror an index into [0, len) excluding the edge sample:
/// for a row [a, b, c], index -1 maps to b and index 3 maps to b.
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    debug_assert!(i > -n && i < 2 * n - 1);
    if i < 0 {
        (-i) as usize
    } else if i >= n {
        (2 * n - 2 - i) as usize
    } else {
        i as usize
    }
}

impl Tape {
    /// Uniform mirror padding on all four sides.
    pub fn reflect_pad(&self, a: Var, pad: usize) -> Result<Var> {
        self.reflect_pad4(a, pad, pad, pad, pad)
    }

    /// Mirror padding with independent top/bottom/left/right amounts. The
    /// border pixel itself is not repeated, so each pad amount must be
    /// strictly smaller than the corresponding extent.
    pub fn reflect_pad4(
        &self,
        a: Var,
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    ) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        let shape = node.shape.clone();
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "reflect_pad: expected NCHW input, got {shape:?}"
            )));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if top >= h || bottom >= h || left >= w || right >= w {
            return Err(Error::shape(format!(
                "reflect_pad: pad ({top},{bottom},{left},{right}) too large for {h}x{w} input"
            )));
        }
        let (oh, ow) = (h + top + bottom, w + left + right);
        let rg = node.requires_grad;
        let mut data = vec![0.0f32; n * c * oh * ow];
        for nc in 0..n * c {
            let src = &node.data[nc * h * w..(nc + 1) * h * w];
            let dst = &mut data[nc * oh * ow..(nc + 1) * oh * ow];
            for oy in 0..oh {
                let sy = reflect(oy as isize - top as isize, h);
                for ox in 0..ow {
                    let sx = reflect(ox as isize - left as isize, w);
                    dst[oy * ow + ox] = src[sy * w + sx];
                }
            }
        }
        let out = inner.push_node(vec![n, c, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f64; n * c * h * w];
                for nc in 0..n * c {
                    let dsrc = &d[nc * oh * ow..(nc + 1) * oh * ow];
                    let dd = &mut din[nc * h * w..(nc + 1) * h * w];
                    for oy in 0..oh {
                        let sy = reflect(oy as isize - top as isize, h);
                        for ox in 0..ow {
                            let sx = reflect(ox as isize - left as isize, w);
                            dd[sy * w + sx] += dsrc[oy * ow + ox] as f64;
                        }
                    }
                }
                let din: Vec<f32> = din.iter().map(|&v| v as f32).collect();
                accumulate(grads, a.0, &din);
            }));
        }
        Ok(out)
    }

    /// Zero padding on the bottom/right edges only. Used to adjust the
    /// output extent of a stride-2 transposed convolution from 2H-1 to 2H.
    pub fn zero_pad_bottom_right(&self, a: Var, bottom: usize, right: usize) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let node = &inner.nodes[a.0];
        let shape = node.shape.clone();
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "zero_pad_bottom_right: expected NCHW input, got {shape:?}"
            )));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (oh, ow) = (h + bottom, w + right);
        let rg = node.requires_grad;
        let mut data = vec![0.0f32; n * c * oh * ow];
        for nc in 0..n * c {
            for y in 0..h {
                let src = nc * h * w + y * w;
                let dst = nc * oh * ow + y * ow;
                data[dst..dst + w].copy_from_slice(&node.data[src..src + w]);
            }
        }
        let out = inner.push_node(vec![n, c, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f32; n * c * h * w];
                for nc in 0..n * c {
                    for y in 0..h {
                        let src = nc * oh * ow + y * ow;
                        let dst = nc * h * w + y * w;
                        din[dst..dst + w].copy_from_slice(&d[src..src + w]);
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
    fn pad_zero_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![1., 2., 3., 4.], true);
        let y = tape.reflect_pad(x, 0).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn reflect_row_matches_definition() {
        // Row [1,2,3] with pad 1 becomes [2,1,2,3,2].
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 1, 3], vec![1., 2., 3.], false);
        let y = tape.reflect_pad4(x, 0, 0, 1, 1).unwrap();
        assert_eq!(tape.value(y), vec![2., 1., 2., 3., 2.]);
    }

    #[test]
    fn pad_too_large_is_error() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![0.0; 4], false);
        assert!(tape.reflect_pad(x, 2).is_err());
    }

    #[test]
    fn gradient_counts_appearances() {
        // Each input cell receives one unit of gradient per appearance in
        // the padded output of sum().
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 1, 3], vec![1., 2., 3.], true);
        let y = tape.reflect_pad4(x, 0, 0, 1, 1).unwrap();
        tape.backward(tape.sum(y)).unwrap();
        // [2,1,2,3,2]: value 1 appears once, 2 three times, 3 once.
        assert_eq!(tape.grad(x).unwrap(), vec![1., 3., 1.]);
    }

    #[test]
    fn zero_pad_bottom_right_extends() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 1, 1], vec![5.], true);
        let y = tape.zero_pad_bottom_right(x, 1, 1).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 2, 2]);
        assert_eq!(tape.value(y), vec![5., 0., 0., 0.]);
        tape.backward(tape.sum(y)).unwrap();
        assert_eq!(tape.grad(x).unwrap(), vec![1.]);
    }
}
