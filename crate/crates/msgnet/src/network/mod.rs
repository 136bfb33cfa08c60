//! The multi-style generative network: an encoder shared between the content
//! path and a Siamese style path, CoMatch feature matching at configurable
//! scales, and an upsampling decoder. Fully convolutional: one parameter set
//! serves any admissible input size.

mod blocks;

pub use blocks::{
    down_res_block, mid_res_block, up_res_block, ParamVars, UpsampleMode, INSTANCE_NORM_EPS,
};

use crate::embedding::StyleEmbedding;
use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::image::Image;
use crate::ops::Padding;
use crate::rng::{stream, Prng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::weights::NetworkWeights;

/// Layer plan of the generative network. Channel widths double at every
/// down-sampling stage starting from `base_width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub base_width: usize,
    pub downsample_stages: usize,
    pub mid_blocks: usize,
    /// Encoder stages with a CoMatch site: 0 is after the input convolution,
    /// `downsample_stages` is the bottleneck.
    pub comatch_scales: Vec<usize>,
    pub upsample_mode: UpsampleMode,
    pub io_kernel: usize,
}

impl Default for ArchitectureSpec {
    /// Desk-scale default: width 8, two down-sampling stages, two mid
    /// blocks, one CoMatch site at the bottleneck, 9x9 input/output
    /// convolutions.
    fn default() -> Self {
        ArchitectureSpec {
            base_width: 8,
            downsample_stages: 2,
            mid_blocks: 2,
            comatch_scales: vec![2],
            upsample_mode: UpsampleMode::UpsampledConv,
            io_kernel: 9,
        }
    }
}

/// How each parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ParamInit {
    Kaiming { fan_in: usize },
    One,
    Zero,
    /// (1/C) I plus small seeded noise.
    CoMatchEye { channels: usize },
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::config("architecture: base_width must be positive"));
        }
        if self.downsample_stages == 0 {
            return Err(Error::config(
                "architecture: at least one downsample stage is required",
            ));
        }
        if self.io_kernel == 0 || self.io_kernel % 2 == 0 {
            return Err(Error::config(format!(
                "architecture: io_kernel must be odd, got {}",
                self.io_kernel
            )));
        }
        if self.comatch_scales.is_empty() {
            return Err(Error::config(
                "architecture: at least one comatch scale is required",
            ));
        }
        let valid = self
            .comatch_scales
            .windows(2)
            .all(|w| w[0] < w[1]);
        if !valid || *self.comatch_scales.last().unwrap() > self.downsample_stages {
            return Err(Error::config(format!(
                "architecture: comatch scales {:?} must be strictly increasing and within 0..={}",
                self.comatch_scales, self.downsample_stages
            )));
        }
        Ok(())
    }

    /// Channel width at encoder stage `s` (stage 0 is after the head).
    pub fn stage_width(&self, s: usize) -> usize {
        self.base_width << s
    }

    fn bottleneck_width(&self) -> usize {
        self.stage_width(self.downsample_stages)
    }

    /// Ordered (name, shape, init) description of every parameter.
    fn parameter_plan(&self) -> Vec<(String, Vec<usize>, ParamInit)> {
        let k = self.io_kernel;
        let w0 = self.base_width;
        let mut plan: Vec<(String, Vec<usize>, ParamInit)> = Vec::new();
        let conv = |plan: &mut Vec<(String, Vec<usize>, ParamInit)>,
                        name: String,
                        out_c: usize,
                        in_c: usize,
                        kk: usize| {
            plan.push((
                name,
                vec![out_c, in_c, kk, kk],
                ParamInit::Kaiming { fan_in: in_c * kk * kk },
            ));
        };
        let norm = |plan: &mut Vec<(String, Vec<usize>, ParamInit)>, name: &str, c: usize| {
            plan.push((format!("{name}.gamma"), vec![c], ParamInit::One));
            plan.push((format!("{name}.beta"), vec![c], ParamInit::Zero));
        };

        conv(&mut plan, "head.conv.weight".into(), w0, 3, k);
        norm(&mut plan, "head.norm", w0);

        for s in 1..=self.downsample_stages {
            let cin = self.stage_width(s - 1);
            let cout = self.stage_width(s);
            let m = (cout / 4).max(1);
            let p = format!("down{s}");
            conv(&mut plan, format!("{p}.reduce.weight"), m, cin, 1);
            norm(&mut plan, &format!("{p}.norm1"), m);
            conv(&mut plan, format!("{p}.mid.weight"), m, m, 3);
            norm(&mut plan, &format!("{p}.norm2"), m);
            conv(&mut plan, format!("{p}.expand.weight"), cout, m, 1);
            conv(&mut plan, format!("{p}.shortcut.weight"), cout, cin, 1);
        }

        for &scale in &self.comatch_scales {
            let c = self.stage_width(scale);
            plan.push((
                format!("comatch{scale}.w"),
                vec![c, c],
                ParamInit::CoMatchEye { channels: c },
            ));
        }

        let cb = self.bottleneck_width();
        for bi in 1..=self.mid_blocks {
            let m = (cb / 4).max(1);
            let p = format!("res{bi}");
            conv(&mut plan, format!("{p}.reduce.weight"), m, cb, 1);
            norm(&mut plan, &format!("{p}.norm1"), m);
            conv(&mut plan, format!("{p}.mid.weight"), m, m, 3);
            norm(&mut plan, &format!("{p}.norm2"), m);
            conv(&mut plan, format!("{p}.expand.weight"), cb, m, 1);
        }

        for u in 1..=self.downsample_stages {
            let cin = self.stage_width(self.downsample_stages - u + 1);
            let cout = self.stage_width(self.downsample_stages - u);
            let m = (cout / 4).max(1);
            let p = format!("up{u}");
            conv(&mut plan, format!("{p}.reduce.weight"), m, cin, 1);
            norm(&mut plan, &format!("{p}.norm1"), m);
            match self.upsample_mode {
                // r^2 * m pre-shuffle channels for the 2x upsampled stage.
                UpsampleMode::UpsampledConv => {
                    conv(&mut plan, format!("{p}.mid.weight"), 4 * m, m, 3)
                }
                // Transposed layout: (in, out, K, K).
                UpsampleMode::FractionalConv => plan.push((
                    format!("{p}.mid.weight"),
                    vec![m, m, 3, 3],
                    ParamInit::Kaiming { fan_in: m * 9 },
                )),
            }
            norm(&mut plan, &format!("{p}.norm2"), m);
            conv(&mut plan, format!("{p}.expand.weight"), cout, m, 1);
            // Transposed 1x1 shortcut: (in, out, 1, 1).
            plan.push((
                format!("{p}.shortcut.weight"),
                vec![cin, cout, 1, 1],
                ParamInit::Kaiming { fan_in: cin },
            ));
        }

        norm(&mut plan, "tail.norm", w0);
        conv(&mut plan, "tail.conv.weight".into(), 3, w0, k);
        plan.push(("tail.conv.bias".into(), vec![3], ParamInit::Zero));
        plan
    }

    /// Closed-form parameter count, written as explicit arithmetic so it can
    /// cross-check the enumerated tensors.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.io_kernel * self.io_kernel;
        let w0 = self.base_width;
        let s = self.downsample_stages;
        let mut total = w0 * 3 * k2 + 2 * w0; // head conv + norm
        for stage in 1..=s {
            let cin = w0 << (stage - 1);
            let cout = w0 << stage;
            let m = (cout / 4).max(1);
            total += m * cin + 2 * m + 9 * m * m + 2 * m + cout * m + cout * cin;
        }
        for &scale in &self.comatch_scales {
            let c = w0 << scale;
            total += c * c;
        }
        let cb = w0 << s;
        let mb = (cb / 4).max(1);
        total += self.mid_blocks * (mb * cb + 2 * mb + 9 * mb * mb + 2 * mb + cb * mb);
        for u in 1..=s {
            let cin = w0 << (s - u + 1);
            let cout = w0 << (s - u);
            let m = (cout / 4).max(1);
            let mid = match self.upsample_mode {
                UpsampleMode::UpsampledConv => 4 * m * m * 9,
                UpsampleMode::FractionalConv => m * m * 9,
            };
            total += m * cin + 2 * m + mid + 2 * m + cout * m + cin * cout;
        }
        total += 2 * w0 + 3 * w0 * k2 + 3; // tail norm + conv + bias
        total
    }

    /// Smallest admissible content edge for [`Generator::generate`].
    pub fn min_content_size(&self) -> usize {
        (self.io_kernel / 2 + 1).max((1 << self.downsample_stages) + 1)
    }

    /// Smallest admissible style size for [`Generator::encode_style`].
    pub fn min_style_size(&self) -> usize {
        (self.io_kernel / 2 + 1).max((1 << (self.downsample_stages - 1)) + 1)
    }

    pub fn write_meta(&self, weights: &mut NetworkWeights) -> Result<()> {
        weights.set_meta("arch.base_width", self.base_width.to_string())?;
        weights.set_meta(
            "arch.downsample_stages",
            self.downsample_stages.to_string(),
        )?;
        weights.set_meta("arch.mid_blocks", self.mid_blocks.to_string())?;
        weights.set_meta(
            "arch.comatch_scales",
            self.comatch_scales
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )?;
        weights.set_meta(
            "arch.upsample_mode",
            match self.upsample_mode {
                UpsampleMode::UpsampledConv => "upsampled_conv",
                UpsampleMode::FractionalConv => "fractional_conv",
            },
        )?;
        weights.set_meta("arch.io_kernel", self.io_kernel.to_string())?;
        Ok(())
    }

    pub fn from_meta(weights: &NetworkWeights) -> Result<Self> {
        let get_usize = |key: &str| -> Result<usize> {
            weights
                .require_meta(key)?
                .parse::<usize>()
                .map_err(|_| Error::format(format!("metadata {key} is not a number")))
        };
        let scales_text = weights.require_meta("arch.comatch_scales")?;
        let comatch_scales = scales_text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::format(format!("bad comatch scale {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let upsample_mode = match weights.require_meta("arch.upsample_mode")? {
            "upsampled_conv" => UpsampleMode::UpsampledConv,
            "fractional_conv" => UpsampleMode::FractionalConv,
            other => {
                return Err(Error::format(format!("unknown upsample mode {other:?}")))
            }
        };
        let spec = ArchitectureSpec {
            base_width: get_usize("arch.base_width")?,
            downsample_stages: get_usize("arch.downsample_stages")?,
            mid_blocks: get_usize("arch.mid_blocks")?,
            comatch_scales,
            upsample_mode,
            io_kernel: get_usize("arch.io_kernel")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A transformation network bound to one parameter set.
pub struct Generator {
    spec: ArchitectureSpec,
    weights: NetworkWeights,
}

impl Generator {
    /// Seeded initialization: Kaiming fan-in normals for convolutions,
    /// gamma 1 / beta 0 for instance norms, `(1/C) I + 0.01 * noise` for
    /// CoMatch weights.
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Prng::new(seed).split(stream::GENERATOR_INIT);
        let mut weights = NetworkWeights::new();
        for (name, shape, init) in spec.parameter_plan() {
            let tensor = match init {
                ParamInit::Kaiming { fan_in } => {
                    let std = (2.0 / fan_in as f32).sqrt();
                    Tensor::rand_normal(shape, &mut rng, std)
                }
                ParamInit::One => Tensor::filled(shape, 1.0),
                ParamInit::Zero => Tensor::zeros(shape),
                ParamInit::CoMatchEye { channels } => {
                    let mut t = Tensor::rand_normal(shape, &mut rng, 0.01);
                    for i in 0..channels {
                        t.data_mut()[i * channels + i] += 1.0 / channels as f32;
                    }
                    t
                }
            };
            weights.insert(name, tensor)?;
        }
        spec.write_meta(&mut weights)?;
        weights.set_meta("kind", "network")?;
        Ok(Generator { spec, weights })
    }

    /// Bind to an existing parameter set, validating names and shapes
    /// against the architecture recorded in its metadata.
    pub fn from_weights(weights: NetworkWeights) -> Result<Self> {
        let spec = ArchitectureSpec::from_meta(&weights)?;
        let plan = spec.parameter_plan();
        if weights.len() != plan.len() {
            return Err(Error::format(format!(
                "weights hold {} tensors but the architecture expects {}",
                weights.len(),
                plan.len()
            )));
        }
        for ((name, shape, _), (have_name, have)) in plan.iter().zip(weights.tensors()) {
            if name != have_name {
                return Err(Error::format(format!(
                    "unexpected tensor {have_name:?}, expected {name:?}"
                )));
            }
            if have.shape() != shape.as_slice() {
                return Err(Error::format(format!(
                    "tensor {name:?} has shape {:?}, expected {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(Generator { spec, weights })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut NetworkWeights {
        &mut self.weights
    }

    pub fn into_weights(self) -> NetworkWeights {
        self.weights
    }

    fn head(&self, tape: &Tape, p: &ParamVars, x: Var) -> Result<Var> {
        let k = self.spec.io_kernel;
        let t = tape.conv2d(
            x,
            p.get("head.conv.weight")?,
            None,
            1,
            Padding::Reflect((k - 1) / 2),
        )?;
        let t = tape.instance_norm(
            t,
            p.get("head.norm.gamma")?,
            p.get("head.norm.beta")?,
            INSTANCE_NORM_EPS,
        )?;
        Ok(tape.relu(t))
    }

    fn apply_comatch(
        &self,
        tape: &Tape,
        p: &ParamVars,
        t: Var,
        emb: &StyleEmbedding,
        stage: usize,
    ) -> Result<Var> {
        if !self.spec.comatch_scales.contains(&stage) {
            return Ok(t);
        }
        let gram = emb.gram_at(stage).ok_or_else(|| {
            Error::shape(format!("style embedding lacks a Gram at stage {stage}"))
        })?;
        let width = self.spec.stage_width(stage);
        if gram.channels() != width {
            return Err(Error::shape(format!(
                "style embedding at stage {stage} has {} channels, network expects {width}",
                gram.channels()
            )));
        }
        let g = tape.constant(&gram.to_tensor());
        let w = p.get(&format!("comatch{stage}.w"))?;
        tape.comatch(t, g, w)
    }

    /// Full content-path forward on an existing tape. `x` is NCHW with
    /// spatial extents divisible by `2^downsample_stages`.
    pub fn forward(
        &self,
        tape: &Tape,
        p: &ParamVars,
        x: Var,
        emb: &StyleEmbedding,
    ) -> Result<Var> {
        let mut t = self.head(tape, p, x)?;
        t = self.apply_comatch(tape, p, t, emb, 0)?;
        for s in 1..=self.spec.downsample_stages {
            t = down_res_block(tape, p, &format!("down{s}"), t)?;
            t = self.apply_comatch(tape, p, t, emb, s)?;
        }
        for b in 1..=self.spec.mid_blocks {
            t = mid_res_block(tape, p, &format!("res{b}"), t)?;
        }
        for u in 1..=self.spec.downsample_stages {
            t = up_res_block(tape, p, &format!("up{u}"), t, self.spec.upsample_mode)?;
        }
        let t = tape.instance_norm(
            t,
            p.get("tail.norm.gamma")?,
            p.get("tail.norm.beta")?,
            INSTANCE_NORM_EPS,
        )?;
        let t = tape.relu(t);
        tape.conv2d(
            t,
            p.get("tail.conv.weight")?,
            Some(p.get("tail.conv.bias")?),
            1,
            Padding::Reflect((self.spec.io_kernel - 1) / 2),
        )
    }

    /// Encoder taps (stage, featuremap) at the CoMatch scales, without any
    /// CoMatch application: the Siamese style path.
    fn encoder_taps(&self, tape: &Tape, p: &ParamVars, x: Var) -> Result<Vec<(usize, Var)>> {
        let mut taps = Vec::new();
        let mut t = self.head(tape, p, x)?;
        if self.spec.comatch_scales.contains(&0) {
            taps.push((0, t));
        }
        for s in 1..=self.spec.downsample_stages {
            t = down_res_block(tape, p, &format!("down{s}"), t)?;
            if self.spec.comatch_scales.contains(&s) {
                taps.push((s, t));
            }
        }
        Ok(taps)
    }

    /// Run the style image through the shared encoder at `style_size` and
    /// return the normalized Gram matrices at the CoMatch scales.
    pub fn encode_style(
        &self,
        style: &Image,
        style_id: &str,
        style_size: usize,
    ) -> Result<StyleEmbedding> {
        let min = self.spec.min_style_size();
        if style_size < min {
            return Err(Error::shape(format!(
                "style size {style_size} is below the receptive minimum {min}"
            )));
        }
        let resized = style.resize(style_size, style_size)?;
        let tape = Tape::new();
        let p = ParamVars::register(&tape, &self.weights, false);
        let x = tape.constant(&resized.to_tensor());
        let taps = self.encoder_taps(&tape, &p, x)?;
        let mut grams = Vec::with_capacity(taps.len());
        for (stage, t) in taps {
            let shape = tape.shape(t);
            let g = tape.gram(t, true)?;
            grams.push((
                stage,
                GramMatrix::new(
                    tape.value(g),
                    shape[1],
                    (shape[1], shape[2], shape[3]),
                    true,
                )?,
            ));
        }
        StyleEmbedding::new(grams, style_id, style_size)
    }

    /// Stylize a content image with a precomputed style embedding. Inputs
    /// whose extents are not divisible by `2^downsample_stages` are
    /// reflect-padded to the next multiple and cropped back, so any content
    /// size at or above the receptive minimum works.
    pub fn generate(&self, content: &Image, emb: &StyleEmbedding) -> Result<Image> {
        let (h, w) = (content.height(), content.width());
        let min = self.spec.min_content_size();
        if h < min || w < min {
            return Err(Error::shape(format!(
                "content {w}x{h} is below the receptive minimum {min}x{min}"
            )));
        }
        let factor = 1usize << self.spec.downsample_stages;
        let ph = (factor - h % factor) % factor;
        let pw = (factor - w % factor) % factor;
        let tape = Tape::new();
        let p = ParamVars::register(&tape, &self.weights, false);
        let mut x = tape.constant(&content.to_tensor());
        if ph > 0 || pw > 0 {
            x = tape.reflect_pad4(x, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2)?;
        }
        let mut y = self.forward(&tape, &p, x, emb)?;
        if ph > 0 {
            y = tape.narrow(y, 2, ph / 2, h)?;
        }
        if pw > 0 {
            y = tape.narrow(y, 3, pw / 2, w)?;
        }
        Image::from_tensor(&tape.tensor(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{synth_texture, TextureKind};

    fn desk_generator(seed: u64) -> Generator {
        Generator::new(ArchitectureSpec::default(), seed).unwrap()
    }

    fn desk_embedding(gen: &Generator, seed: u64) -> StyleEmbedding {
        let style = synth_texture(TextureKind::Stripes, 16, seed);
        gen.encode_style(&style, "stripes", 16).unwrap()
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for spec in [
            ArchitectureSpec::default(),
            ArchitectureSpec {
                base_width: 4,
                downsample_stages: 2,
                mid_blocks: 1,
                comatch_scales: vec![1, 2],
                upsample_mode: UpsampleMode::FractionalConv,
                io_kernel: 5,
            },
        ] {
            let gen = Generator::new(spec.clone(), 3).unwrap();
            assert_eq!(
                gen.weights().parameter_count(),
                spec.parameter_count(),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn weights_round_trip_preserves_generator() {
        let gen = desk_generator(11);
        let bytes = gen.weights().save();
        let reloaded = Generator::from_weights(NetworkWeights::load(&bytes).unwrap()).unwrap();
        assert_eq!(reloaded.weights(), gen.weights());
    }

    #[test]
    fn from_weights_rejects_mismatched_shapes() {
        let gen = desk_generator(4);
        let mut w = gen.weights().clone();
        let name = "head.conv.weight";
        *w.get_mut(name).unwrap() = Tensor::zeros(vec![8, 3, 7, 7]);
        assert!(Generator::from_weights(w).is_err());
    }

    #[test]
    fn generate_preserves_content_dimensions() {
        let gen = desk_generator(7);
        let emb = desk_embedding(&gen, 1);
        for (w, h) in [(32, 32), (48, 48), (20, 36), (15, 9)] {
            let content = synth_texture(TextureKind::Blobs, w.max(h), 2).resize(w, h).unwrap();
            let out = gen.generate(&content, &emb).unwrap();
            assert_eq!((out.width(), out.height()), (w, h), "size {w}x{h}");
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let gen = desk_generator(9);
        let emb = desk_embedding(&gen, 3);
        let content = synth_texture(TextureKind::Noise, 16, 5);
        let a = gen.generate(&content, &emb).unwrap();
        let b = gen.generate(&content, &emb).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_rejects_tiny_content() {
        let gen = desk_generator(2);
        let emb = desk_embedding(&gen, 1);
        let content = Image::filled(4, 4, [0.5; 3]);
        assert!(gen.generate(&content, &emb).is_err());
    }

    #[test]
    fn encode_style_is_deterministic_and_distinguishes_textures() {
        let gen = desk_generator(21);
        let stripes = synth_texture(TextureKind::Stripes, 16, 40);
        let checker = synth_texture(TextureKind::Checker, 16, 41);
        let e1 = gen.encode_style(&stripes, "stripes", 16).unwrap();
        let e2 = gen.encode_style(&stripes, "stripes", 16).unwrap();
        assert_eq!(e1, e2);
        let ec = gen.encode_style(&checker, "checker", 16).unwrap();
        let ga = &e1.grams()[0].1;
        let gb = &ec.grams()[0].1;
        let rel = ga.frobenius_distance(gb) / ga.frobenius_norm().max(gb.frobenius_norm());
        assert!(rel > 0.05, "texture embeddings too close: {rel}");
    }

    #[test]
    fn style_size_changes_embedding() {
        let gen = desk_generator(22);
        let style = synth_texture(TextureKind::Checker, 48, 13);
        let small = gen.encode_style(&style, "s", 16).unwrap();
        let large = gen.encode_style(&style, "s", 48).unwrap();
        let d = small.grams()[0]
            .1
            .frobenius_distance(&large.grams()[0].1);
        assert!(d > 0.0, "brush-size sensitivity requires distinct embeddings");
    }

    #[test]
    fn encode_style_rejects_tiny_sizes() {
        let gen = desk_generator(1);
        let style = synth_texture(TextureKind::Noise, 16, 1);
        assert!(gen.encode_style(&style, "s", 3).is_err());
    }

    #[test]
    fn batch_equivariance() {
        // Two images stylized in one batch equal the two stylized alone.
        let gen = desk_generator(30);
        let emb = desk_embedding(&gen, 8);
        let a = synth_texture(TextureKind::Noise, 16, 50);
        let b = synth_texture(TextureKind::Blobs, 16, 51);
        let tape = Tape::new();
        let p = ParamVars::register(&tape, gen.weights(), false);
        let ta = a.to_tensor();
        let tb = b.to_tensor();
        let mut batch = Vec::new();
        batch.extend_from_slice(ta.data());
        batch.extend_from_slice(tb.data());
        let x = tape.leaf_parts(vec![2, 3, 16, 16], batch, false);
        let y = gen.forward(&tape, &p, x, &emb).unwrap();
        let batched = tape.value(y);
        let ya = gen.generate(&a, &emb).unwrap();
        let yb = gen.generate(&b, &emb).unwrap();
        let single_a = ya.to_tensor();
        let single_b = yb.to_tensor();
        // Compare pre-clamp batched output against clamped singles only
        // where the single outputs are interior to [0, 1].
        let half = batched.len() / 2;
        for (ba, sa) in batched[..half].iter().zip(single_a.data()) {
            if *sa > 0.0 && *sa < 1.0 {
                assert!((ba - sa).abs() < 1e-5, "{ba} vs {sa}");
            }
        }
        for (bb, sb) in batched[half..].iter().zip(single_b.data()) {
            if *sb > 0.0 && *sb < 1.0 {
                assert!((bb - sb).abs() < 1e-5, "{bb} vs {sb}");
            }
        }
    }

    #[test]
    fn zeroed_main_path_reduces_blocks_to_shortcuts() {
        // Zero every main-path tensor (conv weights and norm affines) of one
        // down block; the block then equals its shortcut convolution exactly.
        let mut gen = desk_generator(33);
        for name in [
            "down1.reduce.weight",
            "down1.mid.weight",
            "down1.expand.weight",
            "down1.norm1.gamma",
            "down1.norm1.beta",
            "down1.norm2.gamma",
            "down1.norm2.beta",
        ] {
            let t = gen.weights_mut().get_mut(name).unwrap();
            let shape = t.shape().to_vec();
            *t = Tensor::zeros(shape);
        }
        let tape = Tape::new();
        let p = ParamVars::register(&tape, gen.weights(), false);
        let mut rng = crate::rng::Prng::new(77);
        let x = tape.leaf(
            &Tensor::rand_uniform(vec![1, 8, 8, 8], &mut rng, -1.0, 1.0),
            false,
        );
        let block = down_res_block(&tape, &p, "down1", x).unwrap();
        let shortcut = tape
            .conv2d(
                x,
                p.get("down1.shortcut.weight").unwrap(),
                None,
                2,
                Padding::Zero(0),
            )
            .unwrap();
        assert_eq!(tape.value(block), tape.value(shortcut));
    }

    #[test]
    fn up_block_doubles_spatial_extent() {
        let gen = desk_generator(34);
        let tape = Tape::new();
        let p = ParamVars::register(&tape, gen.weights(), false);
        let mut rng = crate::rng::Prng::new(3);
        let x = tape.leaf(
            &Tensor::rand_uniform(vec![1, 32, 4, 4], &mut rng, -1.0, 1.0),
            false,
        );
        let y = up_res_block(&tape, &p, "up1", x, UpsampleMode::UpsampledConv).unwrap();
        assert_eq!(tape.shape(y), vec![1, 16, 8, 8]);
    }
}
