//! Desk-scale fine-grained recognition lab.
//!
//! Implements the combined ArcFace + Circle objective, temperature-scaled
//! distillation, train/test-time augmentation and three ensemble
//! combiners over a small MLP backbone whose gradients are derived by hand
//! and checked against central finite differences.

pub mod augment;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
