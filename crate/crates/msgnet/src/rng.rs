//! Deterministic counter-based pseudo-random generator.
//!
//! The generator is the SplitMix64 sequence: the state advances by the
//! 64-bit golden-ratio constant and each output is the finalizing mix of
//! the new state. Every draw is therefore a pure function of
//! `seed + i * 0x9E3779B97F4A7C15`, which makes the stream a counter-based
//! generator: two runs with the same seed produce bit-identical draws in
//! any build, and a stream can be split into independent child streams by
//! mixing a tag into the state.
//!
//! All randomness in the crate (weight initialization, data sampling,
//! synthetic textures) flows through this type, keyed by a small set of
//! stream tags, so training runs and checkpoint resumes are reproducible
//! bit for bit.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: mix(seed) }
    }

    /// Derive an independent child stream. Does not advance `self`.
    pub fn split(&self, tag: u64) -> Prng {
        Prng {
            state: mix(self.state ^ mix(tag.wrapping_mul(GOLDEN) ^ 0xA5A5_A5A5_A5A5_A5A5)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 24 bits of mantissa.
    pub fn uniform(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32
    }

    pub fn range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; consumes two uniform draws.
    pub fn normal(&mut self) -> f32 {
        let u1 = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let r = (-2.0 * (1.0 - u1).max(f64::MIN_POSITIVE).ln()).sqrt();
        (r * (std::f64::consts::TAU * u2).cos()) as f32
    }

    /// Uniform integer in [0, n) via the widening-multiply reduction.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Prng::below requires n > 0");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// Stream tags used to derive independent substreams from one run seed.
pub mod stream {
    /// Generator weight initialization.
    pub const GENERATOR_INIT: u64 = 1;
    /// Frozen loss-network weights.
    pub const LOSS_NETWORK: u64 = 2;
    /// Content-batch sampling, further split per iteration.
    pub const CONTENT_SAMPLING: u64 = 3;
    /// Style sampling, further split per iteration.
    pub const STYLE_SAMPLING: u64 = 4;
    /// Pixel-optimization noise init.
    pub const PIXEL_INIT: u64 = 5;
}
