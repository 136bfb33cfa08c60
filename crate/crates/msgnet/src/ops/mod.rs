//! Differentiable tensor operations, implemented as methods on [`crate::tape::Tape`].

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod pad;
mod resize;
mod shape;

pub use conv::Padding;
