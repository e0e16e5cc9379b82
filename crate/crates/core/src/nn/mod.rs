//! The toy network: dense layers, LayerNorm, analytic gradients and training.

mod layernorm;
mod model;
mod train;

pub use layernorm::{layernorm_forward, LayerNormParams, DEFAULT_EPS};
pub use model::{Dense, FreezeMask, Gradients, ParamGroup, ToyModel, DEFAULT_HIDDEN};
pub use train::{accuracy, argmax, train, train_with_history, Optimizer, TrainConfig, TrainHistory};
pub(crate) use train::accuracy_from_logits;
