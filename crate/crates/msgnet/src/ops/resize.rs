//! Bilinear resampling with half-pixel-center alignment.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Tape, Var};

/// Source coordinate for destination index `d`: `(d + 0.5) * in/out - 0.5`.
/// Returns the lower sample index, the upper sample index (clamped) and the
/// interpolation weight toward the upper sample.
#[inline]
pub(crate) fn sample_coords(d: usize, in_extent: usize, out_extent: usize) -> (usize, usize, f32) {
    let pos = (d as f64 + 0.5) * in_extent as f64 / out_extent as f64 - 0.5;
    let floor = pos.floor();
    let t = (pos - floor) as f32;
    let lo = floor as isize;
    let hi = lo + 1;
    let clamp = |i: isize| i.clamp(0, in_extent as isize - 1) as usize;
    (clamp(lo), clamp(hi), t)
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

impl Tape {
    /// Resize an NCHW tensor to `(out_h, out_w)` with bilinear interpolation.
    /// Differentiable with respect to the input only.
    pub fn bilinear_resize(&self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::shape("bilinear_resize: output extents must be positive"));
        }
        let mut inner = self.inner.borrow_mut();
        let shape = inner.nodes[input.0].shape.clone();
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "bilinear_resize: expected NCHW input, got {shape:?}"
            )));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let rg = inner.nodes[input.0].requires_grad;
        let mut data = vec![0.0f32; n * c * out_h * out_w];
        let xs: Vec<(usize, usize, f32)> =
            (0..out_w).map(|d| sample_coords(d, w, out_w)).collect();
        let ys: Vec<(usize, usize, f32)> =
            (0..out_h).map(|d| sample_coords(d, h, out_h)).collect();
        for nc in 0..n * c {
            let plane = &inner.nodes[input.0].data[nc * h * w..][..h * w];
            let dst = &mut data[nc * out_h * out_w..][..out_h * out_w];
            for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                    let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], tx);
                    let bot = lerp(plane[y1 * w + x0], plane[y1 * w + x1], tx);
                    dst[oy * out_w + ox] = lerp(top, bot, ty);
                }
            }
        }
        let out = inner.push_node(vec![n, c, out_h, out_w], data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f64; n * c * h * w];
                for nc in 0..n * c {
                    let dsrc = &d[nc * out_h * out_w..][..out_h * out_w];
                    let dst = &mut din[nc * h * w..][..h * w];
                    for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
                        for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                            let g = dsrc[oy * out_w + ox] as f64;
                            let (tx, ty) = (tx as f64, ty as f64);
                            dst[y0 * w + x0] += g * (1.0 - ty) * (1.0 - tx);
                            dst[y0 * w + x1] += g * (1.0 - ty) * tx;
                            dst[y1 * w + x0] += g * ty * (1.0 - tx);
                            dst[y1 * w + x1] += g * ty * tx;
                        }
                    }
                }
                let din: Vec<f32> = din.iter().map(|&v| v as f32).collect();
                accumulate(grads, input.0, &din);
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.], false);
        let y = tape.bilinear_resize(x, 2, 3).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn constant_stays_constant_under_upsample() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![0.37; 4], false);
        let y = tape.bilinear_resize(x, 4, 4).unwrap();
        for v in tape.value(y) {
            assert_eq!(v, 0.37);
        }
    }

    #[test]
    fn two_to_three_matches_hand_computation() {
        // Half-pixel centers: 1-D positions for out=3, in=2 are
        // -1/6 (clamped), 0.5, 7/6 (clamped), so a row [a, b] maps to
        // [a, (a+b)/2, b].
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![0., 1., 2., 3.], false);
        let y = tape.bilinear_resize(x, 3, 3).unwrap();
        let v = tape.value(y);
        let expected = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
        for (got, want) in v.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-6, "{v:?}");
        }
    }
}
