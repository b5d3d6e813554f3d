//! Minimal differentiable neural-network engine: forward, exact
//! reverse-mode backward (parameter and input gradients), and training.
//!
//! The engine is generic over the scalar type: models run in `f32` at
//! runtime and in `f64` for gradient verification.

mod checkpoint;
pub mod gradcheck;
mod layer;
mod model;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use layer::{Layer, LayerSpec, ModelError};
pub use model::{BackwardPass, Gradients, Model};
pub use tensor::Tensor;
pub use train::{evaluate, train, EpochStats, LabeledExample, OptimizerKind, TrainConfig, TrainReport};

/// Scalar type the engine computes in.
pub trait Scalar: num_traits::Float + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("scalar conversion")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
