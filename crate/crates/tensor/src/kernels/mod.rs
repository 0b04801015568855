pub mod conv;
pub mod gemm;
pub mod norm;
pub mod shuffle;

pub(crate) mod contextual;
