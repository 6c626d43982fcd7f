//! Episode-specific fine-tuning for metric-based few-shot learners.

pub mod audio;
pub mod augment;
pub mod episodes;
pub mod error;
pub mod evalharness;
pub mod experiment;
pub mod learners;
pub mod metaopt;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{grad, DType, GradOptions, Gradients, Tensor, Var};
