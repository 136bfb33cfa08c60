//! Training loop: perceptual-loss minimization over (content, style) pairs
//! with style-size cycling, checkpointing and loss telemetry.

mod adam;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_ppm, Image};
use crate::lossnet::{content_targets, perceptual_loss, LossNetwork, LossWeights};
use crate::network::{ArchitectureSpec, Generator, ParamVars};
use crate::rng::{stream, Prng};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::weights::NetworkWeights;

/// Hyperparameters of the training recipe. The desk-scale defaults train in
/// minutes on one CPU core; the full-scale recipe uses the same balancing
/// weights and learning rate with content size 256, batch 4, 80000
/// iterations and a {256, 512, 768} style-size cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_c: f32,
    pub lambda_s: f32,
    pub lambda_tv: f32,
    pub lr: f32,
    pub batch_size: usize,
    pub iterations: usize,
    pub style_size_cycle: Vec<usize>,
    pub content_size: usize,
    pub seed: u64,
    /// Checkpoint interval in iterations; 0 disables checkpointing.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_c: 1.0,
            lambda_s: 5.0,
            lambda_tv: 1e-6,
            lr: 1e-3,
            batch_size: 2,
            iterations: 300,
            style_size_cycle: vec![16, 32, 48],
            content_size: 32,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_c < 0.0 || self.lambda_s < 0.0 || self.lambda_tv < 0.0 {
            return Err(Error::config("balancing weights must be nonnegative"));
        }
        if self.lambda_c == 0.0 && self.lambda_s == 0.0 {
            return Err(Error::config(
                "at least one of lambda_c, lambda_s must be positive",
            ));
        }
        if self.lr <= 0.0 {
            return Err(Error::config("lr must be positive"));
        }
        if self.batch_size == 0 || self.iterations == 0 || self.content_size == 0 {
            return Err(Error::config(
                "batch_size, iterations and content_size must be positive",
            ));
        }
        if self.style_size_cycle.is_empty() {
            return Err(Error::config("style_size_cycle must be nonempty"));
        }
        if self.style_size_cycle.iter().any(|&s| s == 0) {
            return Err(Error::config("style sizes must be positive"));
        }
        Ok(())
    }

    /// Apply one `key=value` assignment; keys match the field names.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse::<T>().map_err(|_| {
                Error::config(format!("bad value {value:?} for config key {key}"))
            })
        }
        match key {
            "lambda_c" => self.lambda_c = num(key, value)?,
            "lambda_s" => self.lambda_s = num(key, value)?,
            "lambda_tv" => self.lambda_tv = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "content_size" => self.content_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "style_size_cycle" => {
                self.style_size_cycle = value
                    .split(',')
                    .map(|s| num::<usize>(key, s))
                    .collect::<Result<Vec<_>>>()?;
            }
            other => {
                return Err(Error::config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Parse a UTF-8 config file: `key=value` lines, `#` comments, unknown
    /// keys rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            config.apply_kv(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_c: self.lambda_c,
            lambda_s: self.lambda_s,
            lambda_tv: self.lambda_tv,
            ..LossWeights::default()
        }
    }
}

/// Loss telemetry for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub total: f32,
    pub content: f32,
    pub style: f32,
    pub tv: f32,
    pub style_size: usize,
    pub style_index: usize,
}

pub struct TrainOutcome {
    pub generator: Generator,
    pub history: Vec<IterationStats>,
}

/// History as CSV with an `iter,total,content,style,tv` header.
pub fn history_csv(history: &[IterationStats]) -> String {
    let mut out = String::from("iter,total,content,style,tv\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.iteration, h.total, h.content, h.style, h.tv
        ));
    }
    out
}

/// Sorted `.ppm` files of a directory.
fn list_ppm(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot read directory {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::config(format!(
            "no .ppm images in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    load_ppm(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// The sampled data for one iteration, a pure function of (seed, iteration).
fn iteration_samples(
    seed: u64,
    iteration: usize,
    n_content: usize,
    n_styles: usize,
    batch: usize,
) -> (Vec<usize>, usize) {
    let mut content_rng = Prng::new(seed)
        .split(stream::CONTENT_SAMPLING)
        .split(iteration as u64);
    let contents = (0..batch).map(|_| content_rng.below(n_content)).collect();
    let mut style_rng = Prng::new(seed)
        .split(stream::STYLE_SAMPLING)
        .split(iteration as u64);
    (contents, style_rng.below(n_styles))
}

struct TrainData {
    contents: Vec<Tensor>,
    styles: Vec<(String, Image)>,
}

fn load_data(content_dir: &Path, style_dir: &Path, config: &TrainConfig) -> Result<TrainData> {
    let contents = list_ppm(content_dir)?
        .iter()
        .map(|p| {
            load_image(p).and_then(|img| {
                Ok(img
                    .resize(config.content_size, config.content_size)?
                    .to_tensor())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let styles = list_ppm(style_dir)?
        .iter()
        .map(|p| load_image(p).map(|img| (file_stem(p), img)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainData { contents, styles })
}

/// One optimization step; shared by fresh runs and resumed runs.
fn train_iteration(
    generator: &mut Generator,
    adam: &mut AdamState,
    lossnet: &LossNetwork,
    data: &TrainData,
    config: &TrainConfig,
    iteration: usize,
) -> Result<IterationStats> {
    let lw = config.loss_weights();
    let style_size = config.style_size_cycle[iteration % config.style_size_cycle.len()];
    let (content_idx, style_idx) = iteration_samples(
        config.seed,
        iteration,
        data.contents.len(),
        data.styles.len(),
        config.batch_size,
    );
    let (style_id, style_img) = &data.styles[style_idx];
    let embedding = generator.encode_style(style_img, style_id, style_size)?;
    let style_tensor = style_img.resize(style_size, style_size)?.to_tensor();
    let style_grams = lossnet.style_grams(&style_tensor)?;

    // Stack the content batch.
    let s = config.content_size;
    let mut batch = Vec::with_capacity(config.batch_size * 3 * s * s);
    for &ci in &content_idx {
        batch.extend_from_slice(data.contents[ci].data());
    }
    let x_c = Tensor::new(vec![config.batch_size, 3, s, s], batch)?;
    let targets = content_targets(lossnet, &x_c, &lw)?;

    let tape = Tape::new();
    let params = ParamVars::register(&tape, generator.weights(), true);
    let x = tape.constant(&x_c);
    let y = generator.forward(&tape, &params, x, &embedding)?;
    let (total, parts) = perceptual_loss(&tape, y, &targets, &style_grams, lossnet, &lw)?;
    tape.backward(total)?;
    for (name, var) in params.entries() {
        let grad = tape
            .grad(*var)
            .unwrap_or_else(|| vec![0.0; generator.weights().get(name).map_or(0, |t| t.numel())]);
        generator
            .weights_mut()
            .get_mut(name)
            .expect("registered parameter exists")
            .set_grad(grad)?;
    }
    adam.step(generator.weights_mut(), config.lr)?;
    Ok(IterationStats {
        iteration,
        total: parts.total,
        content: parts.content,
        style: parts.style,
        tv: parts.tv,
        style_size,
        style_index: style_idx,
    })
}

/// Serialize a training checkpoint: generator weights, optimizer moments and
/// the iteration counter, all in one MSGW container.
pub fn checkpoint_container(
    generator: &Generator,
    adam: &AdamState,
    next_iteration: usize,
    seed: u64,
) -> Result<NetworkWeights> {
    let mut out = generator.weights().clone();
    adam.write_into(&mut out)?;
    out.set_meta("kind", "checkpoint")?;
    out.set_meta("train.iteration", next_iteration.to_string())?;
    out.set_meta("train.seed", seed.to_string())?;
    Ok(out)
}

/// Split a checkpoint container back into its parts.
pub fn load_checkpoint(
    container: &NetworkWeights,
    expected_spec: &ArchitectureSpec,
    expected_seed: u64,
) -> Result<(Generator, AdamState, usize)> {
    let iteration = container
        .require_meta("train.iteration")?
        .parse::<usize>()
        .map_err(|_| Error::format("train.iteration is not a number"))?;
    let seed = container
        .require_meta("train.seed")?
        .parse::<u64>()
        .map_err(|_| Error::format("train.seed is not a number"))?;
    if seed != expected_seed {
        return Err(Error::config(format!(
            "checkpoint was trained with seed {seed}, run is configured with {expected_seed}"
        )));
    }
    let mut weights = NetworkWeights::new();
    for (name, tensor) in container.tensors() {
        if !name.starts_with("adam.") {
            weights.insert(name.clone(), tensor.clone())?;
        }
    }
    for (k, v) in container.meta_entries() {
        if k.starts_with("arch.") {
            weights.set_meta(k.clone(), v.clone())?;
        }
    }
    weights.set_meta("kind", "network")?;
    let generator = Generator::from_weights(weights)?;
    if generator.spec() != expected_spec {
        return Err(Error::config(
            "checkpoint architecture does not match the configured architecture",
        ));
    }
    let adam = AdamState::read_from(container, generator.weights())?;
    Ok((generator, adam, iteration))
}

pub struct TrainOptions<'a> {
    pub spec: ArchitectureSpec,
    /// Resume from this checkpoint file instead of a fresh initialization.
    pub resume: Option<&'a Path>,
    /// Where to write periodic checkpoints (suffix `.ckpt<ITER>` added).
    pub checkpoint_prefix: Option<&'a Path>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        TrainOptions {
            spec: ArchitectureSpec::default(),
            resume: None,
            checkpoint_prefix: None,
        }
    }
}

/// Deterministic training over directories of PPM images. Unreadable images
/// abort the run (determinism of the sampling stream over a fixed file
/// list). Returns the trained generator and per-iteration loss telemetry.
pub fn train(content_dir: &Path, style_dir: &Path, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_options(content_dir, style_dir, config, &TrainOptions::default())
}

pub fn train_with_options(
    content_dir: &Path,
    style_dir: &Path,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    let data = load_data(content_dir, style_dir, config)?;
    let lossnet = LossNetwork::seeded(config.seed);
    let (mut generator, mut adam, start) = match options.resume {
        Some(path) => {
            let bytes = fs::read(path)?;
            let container = NetworkWeights::load(&bytes)?;
            load_checkpoint(&container, &options.spec, config.seed)?
        }
        None => {
            let generator = Generator::new(options.spec.clone(), config.seed)?;
            let adam = AdamState::new(generator.weights());
            (generator, adam, 0)
        }
    };
    if start > config.iterations {
        return Err(Error::config(format!(
            "checkpoint is at iteration {start}, beyond the configured {}",
            config.iterations
        )));
    }
    let mut history = Vec::with_capacity(config.iterations - start);
    for iteration in start..config.iterations {
        let stats = train_iteration(
            &mut generator,
            &mut adam,
            &lossnet,
            &data,
            config,
            iteration,
        )?;
        history.push(stats);
        let done = iteration + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            if let Some(prefix) = options.checkpoint_prefix {
                let container = checkpoint_container(&generator, &adam, done, config.seed)?;
                let path = checkpoint_path(prefix, done);
                fs::write(path, container.save())?;
            }
        }
    }
    Ok(TrainOutcome { generator, history })
}

/// Checkpoint file name for a given prefix and iteration.
pub fn checkpoint_path(prefix: &Path, iteration: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(format!(".ckpt{iteration:06}"));
    PathBuf::from(name)
}
