//! Dense `f64` tensors with a tape-based reverse-mode autodiff graph.
//!
//! Everything is eager and single threaded; results are bit-reproducible
//! for identical inputs.

mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{sigmoid, softplus, ContextualMode, Gradients, Graph, NormMode, Var};
pub use kernels::contextual::MIN_GUARD;
pub use kernels::conv::ConvGeom;
pub use kernels::norm::BatchStats;
pub use kernels::shuffle::{pixel_shuffle, pixel_unshuffle, upsample_nearest};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("shape {shape:?} needs {expected} elements, got {actual}")]
    ElementCount { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{what} {value} is not divisible by {divisor}")]
    Divisibility { what: &'static str, value: usize, divisor: usize },
    #[error("shapes {left:?} and {right:?} are incompatible")]
    Mismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("nothing to concatenate")]
    Empty,
}
