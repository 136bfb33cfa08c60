//! Building blocks of the transformation network: upsampled convolution and
//! the bottleneck residual blocks (down-sampling, same-scale, up-sampling).

use crate::error::{Error, Result};
use crate::ops::Padding;
use crate::tape::{Tape, Var};
use crate::weights::NetworkWeights;

/// Instance-norm epsilon used everywhere in the network.
pub const INSTANCE_NORM_EPS: f32 = 1e-5;

/// Tape nodes for a parameter set, looked up by name.
pub struct ParamVars {
    entries: Vec<(String, Var)>,
}

impl ParamVars {
    /// Register every tensor of `weights` on `tape`, in stored order.
    pub fn register(tape: &Tape, weights: &NetworkWeights, trainable: bool) -> Self {
        let entries = weights
            .tensors()
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t, trainable)))
            .collect();
        ParamVars { entries }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::shape(format!("missing parameter {name:?}")))
    }

    pub fn entries(&self) -> &[(String, Var)] {
        &self.entries
    }
}

impl Tape {
    /// Upsampled convolution: a stride-1 convolution with reflect padding
    /// `(K-1)/2` emitting `r^2 * O` channels, rearranged so that channel
    /// group `dy*r + dx` of output channel `o` lands at spatial offset
    /// `(dy, dx)` inside each `r x r` block. With `r = 1` this is exactly
    /// `conv2d`. Every output position is covered by exactly one
    /// convolutional window, so a constant input yields per-offset constant
    /// outputs (no overlap checkerboard).
    pub fn upsampled_conv(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        r: usize,
    ) -> Result<Var> {
        let ws = self.shape(weight);
        if ws.len() != 4 {
            return Err(Error::shape(format!(
                "upsampled_conv: weight must be 4-D, got {ws:?}"
            )));
        }
        if r == 0 || ws[0] % (r * r) != 0 {
            return Err(Error::shape(format!(
                "upsampled_conv: weight emits {} channels, not divisible by r^2 = {}",
                ws[0],
                r * r
            )));
        }
        let k = ws[2];
        let conv = self.conv2d(input, weight, bias, 1, Padding::Reflect((k - 1) / 2))?;
        self.pixel_shuffle(conv, r)
    }
}

fn conv_norm_relu(
    tape: &Tape,
    p: &ParamVars,
    conv: &str,
    norm: &str,
    x: Var,
    stride: usize,
    padding: Padding,
) -> Result<Var> {
    let w = p.get(&format!("{conv}.weight"))?;
    let y = tape.conv2d(x, w, None, stride, padding)?;
    let gamma = p.get(&format!("{norm}.gamma"))?;
    let beta = p.get(&format!("{norm}.beta"))?;
    let y = tape.instance_norm(y, gamma, beta, INSTANCE_NORM_EPS)?;
    Ok(tape.relu(y))
}

/// Down-sampling bottleneck: 1x1 reduce, 3x3 stride-2 (reflect padded),
/// 1x1 expand, plus a 1x1 stride-2 convolution shortcut.
pub fn down_res_block(tape: &Tape, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let t = conv_norm_relu(
        tape,
        p,
        &format!("{prefix}.reduce"),
        &format!("{prefix}.norm1"),
        x,
        1,
        Padding::Zero(0),
    )?;
    let t = conv_norm_relu(
        tape,
        p,
        &format!("{prefix}.mid"),
        &format!("{prefix}.norm2"),
        t,
        2,
        Padding::Reflect(1),
    )?;
    let main = tape.conv2d(
        t,
        p.get(&format!("{prefix}.expand.weight"))?,
        None,
        1,
        Padding::Zero(0),
    )?;
    let short = tape.conv2d(
        x,
        p.get(&format!("{prefix}.shortcut.weight"))?,
        None,
        2,
        Padding::Zero(0),
    )?;
    tape.add(main, short)
}

/// Same-scale bottleneck with identity shortcut.
pub fn mid_res_block(tape: &Tape, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let t = conv_norm_relu(
        tape,
        p,
        &format!("{prefix}.reduce"),
        &format!("{prefix}.norm1"),
        x,
        1,
        Padding::Zero(0),
    )?;
    let t = conv_norm_relu(
        tape,
        p,
        &format!("{prefix}.mid"),
        &format!("{prefix}.norm2"),
        t,
        1,
        Padding::Reflect(1),
    )?;
    let main = tape.conv2d(
        t,
        p.get(&format!("{prefix}.expand.weight"))?,
        None,
        1,
        Padding::Zero(0),
    )?;
    tape.add(main, x)
}

/// How the up block's 3x3 stage upsamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    UpsampledConv,
    FractionalConv,
}

/// Up-sampling bottleneck: the main path doubles resolution at the 3x3
/// stage; the shortcut is a 1x1 fractionally-strided convolution at stride
/// 2, zero-extended by one row/column (from 2H-1 to 2H) so both paths agree.
pub fn up_res_block(
    tape: &Tape,
    p: &ParamVars,
    prefix: &str,
    x: Var,
    mode: UpsampleMode,
) -> Result<Var> {
    let t = conv_norm_relu(
        tape,
        p,
        &format!("{prefix}.reduce"),
        &format!("{prefix}.norm1"),
        x,
        1,
        Padding::Zero(0),
    )?;
    let mid_w = p.get(&format!("{prefix}.mid.weight"))?;
    let t = match mode {
        UpsampleMode::UpsampledConv => tape.upsampled_conv(t, mid_w, None, 2)?,
        UpsampleMode::FractionalConv => {
            // (H-1)*2 + 3 = 2H+1; crop the trailing row/column to reach 2H.
            let full = tape.conv2d_transposed(t, mid_w, 2)?;
            let s = tape.shape(full);
            let cropped = tape.narrow(full, 2, 0, s[2] - 1)?;
            tape.narrow(cropped, 3, 0, s[3] - 1)?
        }
    };
    let gamma = p.get(&format!("{prefix}.norm2.gamma"))?;
    let beta = p.get(&format!("{prefix}.norm2.beta"))?;
    let t = tape.relu(tape.instance_norm(t, gamma, beta, INSTANCE_NORM_EPS)?);
    let main = tape.conv2d(
        t,
        p.get(&format!("{prefix}.expand.weight"))?,
        None,
        1,
        Padding::Zero(0),
    )?;
    let short = tape.conv2d_transposed(x, p.get(&format!("{prefix}.shortcut.weight"))?, 2)?;
    let short = tape.zero_pad_bottom_right(short, 1, 1)?;
    tape.add(main, short)
}
