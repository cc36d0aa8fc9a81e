//! Dense `f64` tensors and a reverse-mode tape sized for the capsule model.

mod tape;
mod tensor;

pub use tape::{squash_factor, Gradients, Tape, Unary, Var};
pub use tensor::{l2_norm, matmul, softmax, Tensor, NORM_GUARD};
pub(crate) use tensor::dot;
