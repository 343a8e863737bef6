//! Inference, cost accounting, quantization and evaluation toolkit for
//! lightweight top-down human pose estimation networks.

pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod ops;
pub mod quant;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
