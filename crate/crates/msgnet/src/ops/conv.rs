//! 2-D convolution, its transposed (fractionally-strided) counterpart and
//! average pooling.
//!
//! All kernels accumulate in f64 per output element in a fixed iteration
//! order (channel, then kernel row, then kernel column), which pins the
//! reduction order for bit-reproducibility.

use crate::error::{Error, Result};
use crate::tape::{accumulate, Node, Tape, Var};

/// Spatial padding mode for [`Tape::conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

impl Padding {
    pub fn amount(&self) -> usize {
        match self {
            Padding::Zero(p) | Padding::Reflect(p) => *p,
        }
    }
}

/// Inclusive-exclusive output range such that `o*stride + k - pad` stays in
/// `[0, extent)` for all `o` in the range.
#[inline]
fn valid_out_range(k: usize, pad: usize, stride: usize, extent: usize, out_extent: usize) -> (usize, usize) {
    // o*stride + k - pad >= 0  =>  o >= ceil((pad - k) / stride)
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // o*stride + k - pad <= extent - 1  =>  o <= (extent - 1 + pad - k) / stride
    let hi = if extent + pad > k {
        ((extent - 1 + pad - k) / stride + 1).min(out_extent)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Direct cross-correlation with zero padding. Returns (OH, OW, data).
fn conv2d_forward(
    input: &[f32],
    weight: &[f32],
    bias: Option<&[f32]>,
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (usize, usize, Vec<f32>) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f32; n * co * oh * ow];
    let mut acc = vec![0.0f64; oh * ow];
    for ni in 0..n {
        for o in 0..co {
            let b = bias.map_or(0.0, |b| b[o] as f64);
            acc.iter_mut().for_each(|v| *v = b);
            for i in 0..ci {
                let plane = &input[(ni * ci + i) * h * w..][..h * w];
                let wk = &weight[(o * ci + i) * k * k..][..k * k];
                for ky in 0..k {
                    let (oy0, oy1) = valid_out_range(ky, pad, stride, h, oh);
                    for kx in 0..k {
                        let wv = wk[ky * k + kx] as f64;
                        let (ox0, ox1) = valid_out_range(kx, pad, stride, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            let row = &plane[iy * w..][..w];
                            let arow = &mut acc[oy * ow..][..ow];
                            for ox in ox0..ox1 {
                                let ix = ox * stride + kx - pad;
                                arow[ox] += wv * row[ix] as f64;
                            }
                        }
                    }
                }
            }
            let dst = &mut out[(ni * co + o) * oh * ow..][..oh * ow];
            for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                *d = a as f32;
            }
        }
    }
    (oh, ow, out)
}

/// Gradient w.r.t. the convolution input (scatter of `dout` through the kernel).
fn conv2d_backward_input(
    dout: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let mut din = vec![0.0f32; n * ci * h * w];
    let mut acc = vec![0.0f64; h * w];
    for ni in 0..n {
        for i in 0..ci {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..co {
                let dplane = &dout[(ni * co + o) * oh * ow..][..oh * ow];
                let wk = &weight[(o * ci + i) * k * k..][..k * k];
                for ky in 0..k {
                    let (oy0, oy1) = valid_out_range(ky, pad, stride, h, oh);
                    for kx in 0..k {
                        let wv = wk[ky * k + kx] as f64;
                        let (ox0, ox1) = valid_out_range(kx, pad, stride, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            for ox in ox0..ox1 {
                                let ix = ox * stride + kx - pad;
                                acc[iy * w + ix] += wv * dplane[oy * ow + ox] as f64;
                            }
                        }
                    }
                }
            }
            let dst = &mut din[(ni * ci + i) * h * w..][..h * w];
            for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                *d = a as f32;
            }
        }
    }
    din
}

fn conv2d_backward_weight(
    dout: &[f32],
    input: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let mut dw = vec![0.0f32; co * ci * k * k];
    for o in 0..co {
        for i in 0..ci {
            for ky in 0..k {
                let (oy0, oy1) = valid_out_range(ky, pad, stride, h, oh);
                for kx in 0..k {
                    let (ox0, ox1) = valid_out_range(kx, pad, stride, w, ow);
                    let mut acc = 0.0f64;
                    for ni in 0..n {
                        let dplane = &dout[(ni * co + o) * oh * ow..][..oh * ow];
                        let plane = &input[(ni * ci + i) * h * w..][..h * w];
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            for ox in ox0..ox1 {
                                let ix = ox * stride + kx - pad;
                                acc += dplane[oy * ow + ox] as f64 * plane[iy * w + ix] as f64;
                            }
                        }
                    }
                    dw[((o * ci + i) * k + ky) * k + kx] = acc as f32;
                }
            }
        }
    }
    dw
}

fn shape4(node: &Node, op: &str, role: &str) -> Result<(usize, usize, usize, usize)> {
    let s = &node.shape;
    if s.len() != 4 {
        return Err(Error::shape(format!(
            "{op}: {role} must be 4-D, got {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

impl Tape {
    /// Cross-correlation of an NCHW input with an OIKK weight, square kernel.
    ///
    /// Reflect padding composes a mirror pad with an unpadded convolution,
    /// so the gradient flows through both stages.
    pub fn conv2d(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(Error::shape("conv2d: stride must be positive"));
        }
        let (input, pad) = match padding {
            Padding::Zero(p) => (input, p),
            Padding::Reflect(p) => (self.reflect_pad(input, p)?, 0),
        };
        let mut inner = self.inner.borrow_mut();
        let (n, ci, h, w) = shape4(&inner.nodes[input.0], "conv2d", "input")?;
        let (co, wi, k, k2) = shape4(&inner.nodes[weight.0], "conv2d", "weight")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "conv2d: kernel must be square, got {k}x{k2}"
            )));
        }
        if wi != ci {
            return Err(Error::shape(format!(
                "conv2d: input has {ci} channels but weight expects {wi}"
            )));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape(format!(
                "conv2d: kernel {k}x{k} does not fit padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        if let Some(b) = bias {
            let bs = &inner.nodes[b.0].shape;
            if bs.as_slice() != [co] {
                return Err(Error::shape(format!(
                    "conv2d: bias shape {bs:?} does not match {co} output channels"
                )));
            }
        }
        let mut rg = inner.nodes[input.0].requires_grad || inner.nodes[weight.0].requires_grad;
        if let Some(b) = bias {
            rg |= inner.nodes[b.0].requires_grad;
        }
        let bias_data = bias.map(|b| inner.nodes[b.0].data.clone());
        let (oh, ow, data) = conv2d_forward(
            &inner.nodes[input.0].data,
            &inner.nodes[weight.0].data,
            bias_data.as_deref(),
            n,
            ci,
            h,
            w,
            co,
            k,
            stride,
            pad,
        );
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "conv2d: non-finite value in output (overflow)",
            ));
        }
        let out = inner.push_node(vec![n, co, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[input.0].requires_grad {
                    let din = conv2d_backward_input(
                        &d,
                        &nodes[weight.0].data,
                        n,
                        ci,
                        h,
                        w,
                        co,
                        k,
                        stride,
                        pad,
                        oh,
                        ow,
                    );
                    accumulate(grads, input.0, &din);
                }
                if nodes[weight.0].requires_grad {
                    let dw = conv2d_backward_weight(
                        &d,
                        &nodes[input.0].data,
                        n,
                        ci,
                        h,
                        w,
                        co,
                        k,
                        stride,
                        pad,
                        oh,
                        ow,
                    );
                    accumulate(grads, weight.0, &dw);
                }
                if let Some(b) = bias {
                    if nodes[b.0].requires_grad {
                        let mut db = vec![0.0f64; co];
                        for ni in 0..n {
                            for o in 0..co {
                                let dplane = &d[(ni * co + o) * oh * ow..][..oh * ow];
                                db[o] += dplane.iter().map(|&v| v as f64).sum::<f64>();
                            }
                        }
                        let db: Vec<f32> = db.iter().map(|&v| v as f32).collect();
                        accumulate(grads, b.0, &db);
                    }
                }
            }));
        }
        Ok(out)
    }

    /// Fractionally-strided (transposed) convolution: the adjoint of
    /// [`Tape::conv2d`] with the same OIKK weight, zero padding and stride.
    /// The input's channel count must equal the weight's first extent; the
    /// output has the weight's second extent as channels and spatial size
    /// `(H-1)*stride + K`.
    pub fn conv2d_transposed(&self, input: Var, weight: Var, stride: usize) -> Result<Var> {
        if stride == 0 {
            return Err(Error::shape(
                "conv2d_transposed: stride must be positive",
            ));
        }
        let mut inner = self.inner.borrow_mut();
        let (n, cin, h, w) = shape4(&inner.nodes[input.0], "conv2d_transposed", "input")?;
        let (wo, cout, k, k2) = shape4(&inner.nodes[weight.0], "conv2d_transposed", "weight")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "conv2d_transposed: kernel must be square, got {k}x{k2}"
            )));
        }
        if wo != cin {
            return Err(Error::shape(format!(
                "conv2d_transposed: input has {cin} channels but weight's first extent is {wo}"
            )));
        }
        let oh = (h - 1) * stride + k;
        let ow = (w - 1) * stride + k;
        let rg = inner.nodes[input.0].requires_grad || inner.nodes[weight.0].requires_grad;
        let mut data = vec![0.0f32; n * cout * oh * ow];
        {
            let src = &inner.nodes[input.0].data;
            let wdat = &inner.nodes[weight.0].data;
            let mut acc = vec![0.0f64; oh * ow];
            for ni in 0..n {
                for i in 0..cout {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for o in 0..cin {
                        let plane = &src[(ni * cin + o) * h * w..][..h * w];
                        let wk = &wdat[(o * cout + i) * k * k..][..k * k];
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = wk[ky * k + kx] as f64;
                                for y in 0..h {
                                    let oy = y * stride + ky;
                                    for x in 0..w {
                                        let ox = x * stride + kx;
                                        acc[oy * ow + ox] += wv * plane[y * w + x] as f64;
                                    }
                                }
                            }
                        }
                    }
                    let dst = &mut data[(ni * cout + i) * oh * ow..][..oh * ow];
                    for (dv, &a) in dst.iter_mut().zip(acc.iter()) {
                        *dv = a as f32;
                    }
                }
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "conv2d_transposed: non-finite value in output (overflow)",
            ));
        }
        let out = inner.push_node(vec![n, cout, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |nodes, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                if nodes[input.0].requires_grad {
                    // d_in[n,o,y,x] = sum_{i,ky,kx} dout[n,i,y*s+ky,x*s+kx] * w[o,i,ky,kx]
                    let wdat = &nodes[weight.0].data;
                    let mut din = vec![0.0f32; n * cin * h * w];
                    for ni in 0..n {
                        for o in 0..cin {
                            let dst = &mut din[(ni * cin + o) * h * w..][..h * w];
                            for y in 0..h {
                                for x in 0..w {
                                    let mut acc = 0.0f64;
                                    for i in 0..cout {
                                        let dplane = &d[(ni * cout + i) * oh * ow..][..oh * ow];
                                        let wk = &wdat[(o * cout + i) * k * k..][..k * k];
                                        for ky in 0..k {
                                            let oy = y * stride + ky;
                                            for kx in 0..k {
                                                let ox = x * stride + kx;
                                                acc += dplane[oy * ow + ox] as f64
                                                    * wk[ky * k + kx] as f64;
                                            }
                                        }
                                    }
                                    dst[y * w + x] = acc as f32;
                                }
                            }
                        }
                    }
                    accumulate(grads, input.0, &din);
                }
                if nodes[weight.0].requires_grad {
                    let src = &nodes[input.0].data;
                    let mut dw = vec![0.0f32; cin * cout * k * k];
                    for o in 0..cin {
                        for i in 0..cout {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let mut acc = 0.0f64;
                                    for ni in 0..n {
                                        let plane = &src[(ni * cin + o) * h * w..][..h * w];
                                        let dplane = &d[(ni * cout + i) * oh * ow..][..oh * ow];
                                        for y in 0..h {
                                            let oy = y * stride + ky;
                                            for x in 0..w {
                                                let ox = x * stride + kx;
                                                acc += plane[y * w + x] as f64
                                                    * dplane[oy * ow + ox] as f64;
                                            }
                                        }
                                    }
                                    dw[((o * cout + i) * k + ky) * k + kx] = acc as f32;
                                }
                            }
                        }
                    }
                    accumulate(grads, weight.0, &dw);
                }
            }));
        }
        Ok(out)
    }

    /// 2x2 average pooling with stride 2; trailing odd rows/columns are
    /// dropped.
    pub fn avg_pool2(&self, input: Var) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let (n, c, h, w) = shape4(&inner.nodes[input.0], "avg_pool2", "input")?;
        if h < 2 || w < 2 {
            return Err(Error::shape(format!(
                "avg_pool2: input {h}x{w} smaller than the 2x2 window"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let rg = inner.nodes[input.0].requires_grad;
        let mut data = vec![0.0f32; n * c * oh * ow];
        for nc in 0..n * c {
            let plane = &inner.nodes[input.0].data[nc * h * w..][..h * w];
            let dst = &mut data[nc * oh * ow..][..oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    let acc = plane[2 * y * w + 2 * x] as f64
                        + plane[2 * y * w + 2 * x + 1] as f64
                        + plane[(2 * y + 1) * w + 2 * x] as f64
                        + plane[(2 * y + 1) * w + 2 * x + 1] as f64;
                    dst[y * ow + x] = (acc * 0.25) as f32;
                }
            }
        }
        let out = inner.push_node(vec![n, c, oh, ow], data, rg);
        if rg {
            inner.push_record(Box::new(move |_, grads| {
                let Some(d) = grads[out.0].clone() else { return };
                let mut din = vec![0.0f32; n * c * h * w];
                for nc in 0..n * c {
                    let dsrc = &d[nc * oh * ow..][..oh * ow];
                    let dst = &mut din[nc * h * w..][..h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            let g = dsrc[y * ow + x] * 0.25;
                            dst[2 * y * w + 2 * x] = g;
                            dst[2 * y * w + 2 * x + 1] = g;
                            dst[(2 * y + 1) * w + 2 * x] = g;
                            dst[(2 * y + 1) * w + 2 * x + 1] = g;
                        }
                    }
                }
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
    fn identity_kernel_is_identity() {
        // 1x1 kernels with w[o][i] = delta(o, i) reproduce the input exactly.
        let tape = Tape::new();
        let x = tape.leaf_parts(
            vec![1, 2, 2, 2],
            vec![0.5, -1.0, 2.0, 3.0, -0.25, 0.0, 7.0, 1.5],
            true,
        );
        let eye = tape.leaf_parts(vec![2, 2, 1, 1], vec![1., 0., 0., 1.], false);
        let y = tape.conv2d(x, eye, None, 1, Padding::Zero(0)).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn ones_kernel_sums_window() {
        // 3x3 input of ones, 2x2 kernel of ones: every 2x2 window sums to 4.
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 3, 3], vec![1.0; 9], false);
        let w = tape.leaf_parts(vec![1, 1, 2, 2], vec![1.0; 4], false);
        let y = tape.conv2d(x, w, None, 1, Padding::Zero(0)).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 2, 2]);
        assert_eq!(tape.value(y), vec![4.0; 4]);
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 3, 4, 4], vec![0.0; 48], false);
        let w = tape.leaf_parts(vec![2, 4, 3, 3], vec![0.0; 72], false);
        let err = tape.conv2d(x, w, None, 1, Padding::Zero(1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "got: {msg}");
    }

    #[test]
    fn transposed_degenerate_scatter() {
        // 1x1x1x1 input v, 1x1x1x1 weight w, stride 2 -> single output v*w.
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 1, 1], vec![3.0], false);
        let w = tape.leaf_parts(vec![1, 1, 1, 1], vec![-2.0], false);
        let y = tape.conv2d_transposed(x, w, 2).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 1, 1]);
        assert_eq!(tape.value(y), vec![-6.0]);
    }

    #[test]
    fn transposed_overlap_pattern() {
        // 2x2 ones input, 3x3 ones weight, stride 2: 5x5 output whose center
        // receives 4 overlapping contributions and corners 1.
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![1.0; 4], false);
        let w = tape.leaf_parts(vec![1, 1, 3, 3], vec![1.0; 9], false);
        let y = tape.conv2d_transposed(x, w, 2).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 5, 5]);
        let v = tape.value(y);
        assert_eq!(v[2 * 5 + 2], 4.0);
        for corner in [0, 4, 20, 24] {
            assert_eq!(v[corner], 1.0);
        }
    }

    #[test]
    fn avg_pool_halves_and_averages() {
        let tape = Tape::new();
        let x = tape.leaf_parts(vec![1, 1, 2, 2], vec![1., 2., 3., 6.], true);
        let y = tape.avg_pool2(x).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 1, 1]);
        assert_eq!(tape.value(y), vec![3.0]);
        tape.backward(tape.sum(y)).unwrap();
        assert_eq!(tape.grad(x).unwrap(), vec![0.25; 4]);
    }
}
