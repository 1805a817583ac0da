//! Dense tensors, reverse-mode differentiation and Adam.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod kernels;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::NumericsError;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
