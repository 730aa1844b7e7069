//! Minimal tensor and autodiff engine backing the denoiser.

mod graph;
mod tensor;

pub use graph::{Graph, TokenGroup, Var};
pub use tensor::{gemm, Real, Tensor, View};
