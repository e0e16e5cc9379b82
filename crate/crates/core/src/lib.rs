//! LayerNorm fine-tuning laboratory.
//!
//! Trains small LayerNorm classifiers on synthetic shifted Gaussian domains,
//! measures data and parameter shifts, rescales the learned LayerNorm shifts and
//! runs the full grid of toy experiments.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the experiment harness.

pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod surgery;
pub mod synthdata;
pub mod tuning;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type RealMatrix = Matrix<f64>;
pub type RealMatrix32 = Matrix<f32>;
pub type Model = nn::ToyModel<f64>;
pub type Model32 = nn::ToyModel<f32>;
pub type LnParams = nn::LayerNormParams<f64>;
