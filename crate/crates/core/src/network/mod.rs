//! Set-conditioned segmentation network with hand-written backpropagation.

pub mod checkpoint;
pub mod model;
pub mod ops;
mod scalar;

pub use model::{count_params, forward, sigmoid, Model, ModelConfig, ModelParams, Network, ParamSpec, Prediction, Tape};
pub use checkpoint::{Checkpoint, OptimizerState};
pub use ops::Maps;
pub use scalar::Scalar;
