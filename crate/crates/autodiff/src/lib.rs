//! Reverse-mode automatic differentiation over dense real tensors.
//!
//! The operator set covers what 1-D convolutional vocoder networks and their
//! spectral losses need: elementwise math, reductions, 1-D/2-D convolutions,
//! transposed convolution, framing, a differentiable real FFT and a handful of
//! structural ops. [`gradcheck`] compares analytic gradients against central
//! differences.

pub mod error;
pub mod fft;
pub mod gradcheck;
mod graph;
mod kernels;
pub mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{BinaryOp, Conv1dOptions, Graph, PadMode, ReduceOp, UnaryOp, Var};
pub use real::Real;
pub use tensor::Tensor;
