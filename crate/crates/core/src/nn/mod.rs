//! Dense-tensor numeric kernel: reverse-mode gradients, Adam, clipping.

mod adam;
mod init;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamStateBase};
pub use init::{embedding_uniform, glorot_uniform, zeros};
pub use tape::{Gradients, TapeBase, Var};
pub use tensor::TensorBase;

pub(crate) use tape::sigmoid_scalar;
pub(crate) use tensor::matmul_raw;
