//! The joint depth and segmentation network on a small reverse-mode
//! autodiff engine.

pub mod checkpoint;
pub mod config;
pub mod cost;
pub mod geo_ops;
pub mod model;
pub mod ops;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;
#[cfg(test)]
pub(crate) mod testing;

pub use cost::{dinl, sncv, split_normalize};
pub use geo_ops::{pscv, LevelGeometry};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use config::{ArchConfig, Task};
pub use model::{cosemdepth_forward, forward_sequence, FrameOutput, JointOutput};
pub use params::{param_count, ParamStore};
pub use checkpoint::{Checkpoint, StoredMetrics};
