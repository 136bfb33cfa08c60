//! Frozen multi-scale descriptive network and the perceptual objective.
//!
//! Four convolutional stages (two 3x3 conv + ReLU layers each, 2x2 average
//! pooling between stages) with fixed seeded weights stand in for a
//! pretrained classifier as the loss network; an external parameter set in
//! the MSGW container format can be loaded instead. Features are tapped
//! after the last ReLU of each stage, so tap `i` has spatial extent
//! `H / 2^(i-1)`.
//!
//! The training objective combines the content feature distance at one tap,
//! normalized-Gram distances over all four taps, and squared anisotropic
//! total variation:
//!
//! ```text
//! total = lambda_c * |F_c(y) - F_c(x_c)|_F^2 / numel(tap)
//!       + lambda_s * (1/B) sum_batch sum_i |G(F_i(y)) - G_i|_F^2
//!       + lambda_tv * tv(y)
//! ```
//!
//! The content term is the mean squared feature difference and the Grams
//! are divided by `C*H*W`, the normalization convention of the perceptual
//! losses this objective descends from; it is what makes the standard
//! balancing weights (content 1, style 5) act on comparable scales.

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::ops::Padding;
use crate::rng::{stream, Prng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::weights::NetworkWeights;

pub const LOSS_STAGES: usize = 4;
/// Stage widths at desk scale.
pub const LOSS_WIDTHS: [usize; LOSS_STAGES] = [8, 16, 32, 64];

/// Balancing weights and tap selection for the perceptual objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub lambda_c: f32,
    pub lambda_s: f32,
    pub lambda_tv: f32,
    /// Content tap, 1-based.
    pub content_scale: usize,
    /// Style taps, 1-based.
    pub style_scales: Vec<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_c: 1.0,
            lambda_s: 5.0,
            lambda_tv: 1e-6,
            content_scale: 2,
            style_scales: vec![1, 2, 3, 4],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_c < 0.0 || self.lambda_s < 0.0 || self.lambda_tv < 0.0 {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        if self.lambda_c == 0.0 && self.lambda_s == 0.0 {
            return Err(Error::config(
                "at least one of lambda_c, lambda_s must be positive",
            ));
        }
        if self.content_scale == 0 || self.content_scale > LOSS_STAGES {
            return Err(Error::config(format!(
                "content scale {} out of range 1..={LOSS_STAGES}",
                self.content_scale
            )));
        }
        if self
            .style_scales
            .iter()
            .any(|&s| s == 0 || s > LOSS_STAGES)
        {
            return Err(Error::config(format!(
                "style scales {:?} out of range 1..={LOSS_STAGES}",
                self.style_scales
            )));
        }
        Ok(())
    }
}

/// The frozen descriptive network. Parameters never receive gradients.
pub struct LossNetwork {
    weights: NetworkWeights,
    widths: [usize; LOSS_STAGES],
}

impl LossNetwork {
    /// Seeded random frozen weights (Kaiming fan-in normals).
    pub fn seeded(seed: u64) -> Self {
        let mut rng = Prng::new(seed).split(stream::LOSS_NETWORK);
        let mut weights = NetworkWeights::new();
        let mut in_c = 3;
        for (i, &width) in LOSS_WIDTHS.iter().enumerate() {
            for j in 1..=2 {
                let cin = if j == 1 { in_c } else { width };
                let std = (2.0 / (cin * 9) as f32).sqrt();
                weights
                    .insert(
                        format!("stage{}.conv{}.weight", i + 1, j),
                        Tensor::rand_normal(vec![width, cin, 3, 3], &mut rng, std),
                    )
                    .expect("unique names");
                weights
                    .insert(
                        format!("stage{}.conv{}.bias", i + 1, j),
                        Tensor::zeros(vec![width]),
                    )
                    .expect("unique names");
            }
            in_c = width;
        }
        weights.set_meta("kind", "loss-network").expect("valid key");
        weights
            .set_meta(
                "loss.widths",
                LOSS_WIDTHS
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .expect("valid key");
        LossNetwork {
            weights,
            widths: LOSS_WIDTHS,
        }
    }

    /// Load external loss-network weights from an MSGW container.
    pub fn from_weights(weights: NetworkWeights) -> Result<Self> {
        let widths_text = weights.require_meta("loss.widths")?;
        let parsed: Vec<usize> = widths_text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::format(format!("bad loss width {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let widths: [usize; LOSS_STAGES] = parsed.clone().try_into().map_err(|_| {
            Error::format(format!(
                "loss network needs {LOSS_STAGES} stage widths, got {}",
                parsed.len()
            ))
        })?;
        let mut in_c = 3;
        for (i, &width) in widths.iter().enumerate() {
            for j in 1..=2 {
                let cin = if j == 1 { in_c } else { width };
                let w = weights.require(&format!("stage{}.conv{}.weight", i + 1, j))?;
                if w.shape() != [width, cin, 3, 3] {
                    return Err(Error::format(format!(
                        "stage{}.conv{}.weight has shape {:?}, expected {:?}",
                        i + 1,
                        j,
                        w.shape(),
                        [width, cin, 3, 3]
                    )));
                }
                let b = weights.require(&format!("stage{}.conv{}.bias", i + 1, j))?;
                if b.shape() != [width] {
                    return Err(Error::format(format!(
                        "stage{}.conv{}.bias has shape {:?}, expected [{width}]",
                        i + 1,
                        j,
                        b.shape()
                    )));
                }
            }
            in_c = width;
        }
        Ok(LossNetwork { weights, widths })
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn widths(&self) -> &[usize; LOSS_STAGES] {
        &self.widths
    }

    /// Feature taps of `x` (NCHW) after the last ReLU of each stage. The
    /// parameters are registered as constants, so gradients flow to `x`
    /// only.
    pub fn extract_features(&self, tape: &Tape, x: Var) -> Result<Vec<Var>> {
        let shape = tape.shape(x);
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::shape(format!(
                "extract_features: expected Nx3xHxW input, got {shape:?}"
            )));
        }
        let min = 1usize << (LOSS_STAGES - 1);
        if shape[2] < min || shape[3] < min {
            return Err(Error::shape(format!(
                "extract_features: input {}x{} too small for the deepest tap (needs {min})",
                shape[3], shape[2]
            )));
        }
        let mut taps = Vec::with_capacity(LOSS_STAGES);
        let mut t = x;
        for i in 1..=LOSS_STAGES {
            for j in 1..=2 {
                let w = tape.constant(
                    self.weights
                        .require(&format!("stage{i}.conv{j}.weight"))?,
                );
                let b = tape.constant(self.weights.require(&format!("stage{i}.conv{j}.bias"))?);
                t = tape.conv2d(t, w, Some(b), 1, Padding::Zero(1))?;
                t = tape.relu(t);
            }
            taps.push(t);
            if i < LOSS_STAGES {
                t = tape.avg_pool2(t)?;
            }
        }
        Ok(taps)
    }

    /// Normalized Gram matrices of an image tensor at every style tap,
    /// averaged over batch samples for N > 1.
    pub fn style_grams(&self, x: &Tensor) -> Result<Vec<GramMatrix>> {
        let tape = Tape::new();
        let v = tape.constant(x);
        let taps = self.extract_features(&tape, v)?;
        let n = tape.shape(v)[0];
        let mut grams = Vec::with_capacity(taps.len());
        for tap in taps {
            let shape = tape.shape(tap);
            let (c, h, w) = (shape[1], shape[2], shape[3]);
            let mut acc = vec![0.0f32; c * c];
            for s in 0..n {
                let sample = tape.narrow(tap, 0, s, 1)?;
                let g = tape.gram(sample, true)?;
                for (a, v) in acc.iter_mut().zip(tape.value(g)) {
                    *a += v / n as f32;
                }
            }
            grams.push(GramMatrix::new(acc, c, (c, h, w), true)?);
        }
        Ok(grams)
    }
}

/// Squared anisotropic total variation, summed over channels:
/// `sum (y[i, j+1] - y[i, j])^2 + (y[i+1, j] - y[i, j])^2`.
pub fn tv_loss(tape: &Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y);
    if shape.len() != 4 {
        return Err(Error::shape(format!(
            "tv_loss: expected NCHW input, got {shape:?}"
        )));
    }
    let (h, w) = (shape[2], shape[3]);
    let mut total = tape.leaf_parts(vec![1], vec![0.0], false);
    if w > 1 {
        let right = tape.narrow(y, 3, 1, w - 1)?;
        let left = tape.narrow(y, 3, 0, w - 1)?;
        let d = tape.sub(right, left)?;
        let sq = tape.mul(d, d)?;
        total = tape.add(total, tape.sum(sq))?;
    }
    if h > 1 {
        let down = tape.narrow(y, 2, 1, h - 1)?;
        let up = tape.narrow(y, 2, 0, h - 1)?;
        let d = tape.sub(down, up)?;
        let sq = tape.mul(d, d)?;
        total = tape.add(total, tape.sum(sq))?;
    }
    Ok(total)
}

/// Scalar loss components, read back from the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f32,
    pub content: f32,
    pub style: f32,
    pub tv: f32,
}

/// The perceptual objective of a generated batch `y` against per-sample
/// content feature targets and per-tap style Gram targets. Targets are
/// constants; the gradient flows to `y` (and through it to whatever
/// produced `y`). Returns the differentiable total plus the part values.
pub fn perceptual_loss(
    tape: &Tape,
    y: Var,
    content_targets: &Tensor,
    style_grams: &[GramMatrix],
    net: &LossNetwork,
    lw: &LossWeights,
) -> Result<(Var, LossParts)> {
    lw.validate()?;
    let shape = tape.shape(y);
    let n = shape[0];
    let taps = net.extract_features(tape, y)?;

    // Content term: mean squared feature difference at the chosen tap.
    let tap_c = taps[lw.content_scale - 1];
    let target = tape.constant(content_targets);
    if tape.shape(target) != tape.shape(tap_c) {
        return Err(Error::shape(format!(
            "perceptual_loss: content target shape {:?} does not match tap {:?}",
            tape.shape(target),
            tape.shape(tap_c)
        )));
    }
    let content = tape.sq_dist(tap_c, target)?;
    let content = tape.div_scalar(content, tape.numel(tap_c) as f32);

    // Style term: normalized Grams per sample, summed over taps and batch.
    if style_grams.len() != lw.style_scales.len() {
        return Err(Error::shape(format!(
            "perceptual_loss: {} style Grams supplied for {} style scales",
            style_grams.len(),
            lw.style_scales.len()
        )));
    }
    let mut style = tape.leaf_parts(vec![1], vec![0.0], false);
    for (&scale, target_gram) in lw.style_scales.iter().zip(style_grams) {
        let tap = taps[scale - 1];
        let c = tape.shape(tap)[1];
        if target_gram.channels() != c {
            return Err(Error::shape(format!(
                "perceptual_loss: style Gram at tap {scale} has {} channels, tap has {c}",
                target_gram.channels()
            )));
        }
        if !target_gram.normalized() {
            return Err(Error::shape(format!(
                "perceptual_loss: style Gram at tap {scale} must be normalized"
            )));
        }
        let g_target = tape.constant(&target_gram.to_tensor());
        for s in 0..n {
            let sample = tape.narrow(tap, 0, s, 1)?;
            let g = tape.gram(sample, true)?;
            let d = tape.sq_dist(g, g_target)?;
            let d = tape.div_scalar(d, (c * c) as f32);
            style = tape.add(style, d)?;
        }
    }
    let style = tape.div_scalar(style, n as f32);

    let tv = tv_loss(tape, y)?;

    let total = tape.add(
        tape.add(
            tape.mul_scalar(content, lw.lambda_c),
            tape.mul_scalar(style, lw.lambda_s),
        )?,
        tape.mul_scalar(tv, lw.lambda_tv),
    )?;
    let parts = LossParts {
        total: tape.scalar_value(total),
        content: tape.scalar_value(content),
        style: tape.scalar_value(style),
        tv: tape.scalar_value(tv),
    };
    Ok((total, parts))
}

/// Content-tap feature targets for a batch of content images.
pub fn content_targets(net: &LossNetwork, x_c: &Tensor, lw: &LossWeights) -> Result<Tensor> {
    let tape = Tape::new();
    let v = tape.constant(x_c);
    let taps = net.extract_features(&tape, v)?;
    Ok(tape.tensor(taps[lw.content_scale - 1]))
}
