//! Joint depth estimation and semantic segmentation for aerial video.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: pinhole camera, inter-frame motion, warping, and the
//!   parallax/depth conversion.
//! - [`synthgen`]: a ray-cast renderer producing frames with exact depth,
//!   class maps, and poses, plus the on-disk dataset format.
//! - [`net`]: a small reverse-mode autodiff engine and the joint network
//!   (shared encoder, parallax decoder with cost volumes, semantic decoder).
//! - [`objectives`]: multi-level depth and semantic losses.
//! - [`evalkit`]: metrics, class mappings, and reports.
//! - [`trainer`]: training, augmentation, dataset mixing, evaluation.

pub mod classes;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod net;
pub mod objectives;
pub mod synthgen;
pub mod trainer;

pub use classes::{Class, NUM_CLASSES};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, DepthMap, MotionTransform, ParallaxMap, Pose};
