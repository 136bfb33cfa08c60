//! Multi-style neural style transfer at desk scale.
//!
//! The crate implements the full stack from scratch: an f32 tensor core with
//! reverse-mode automatic differentiation, Gram-matrix style statistics and
//! the feature-statistics-matching (CoMatch) layer, an encoder/decoder
//! generative network with upsampled-convolution decoding, a frozen
//! multi-scale loss network with the perceptual training objective, Adam
//! training with style-size cycling, and runtime manipulation (style
//! interpolation, color-preserving transfer, spatial masking, brush-size
//! control). Everything is seeded and single-threaded per computation, so
//! runs are reproducible bit for bit.

mod linalg;

pub mod embedding;
pub mod error;
pub mod gram;
pub mod image;
pub mod lossnet;
pub mod network;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use ops::Padding;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
