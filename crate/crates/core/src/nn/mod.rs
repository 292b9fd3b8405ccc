//! Dense tensors, a reverse-mode tape, layers and optimizers.
//!
//! Everything is generic over [`Real`] so the same layer code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

pub mod checkpoint;
mod conv;
pub mod graph;
pub mod layer;
mod loss;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{Checkpoint, ModelKind};
pub use graph::{Graph, Var};
pub use layer::{Layer, LayerSpec};
pub use loss::ProxyAnchorArgs;
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{ParamId, ParamStore};
pub use tensor::{Real, Tensor};
