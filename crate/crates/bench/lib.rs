//! Shared fixtures for the criterion benchmarks in `benches/`.

use aeroscene_core::geometry::{CameraIntrinsics, MotionTransform};
use aeroscene_core::net::Tensor;
use aeroscene_core::synthgen::{DatasetRecipe, Trajectory};
use nalgebra::{Rotation3, Vector3};

/// Smooth deterministic pseudo-features; benchmarks need no RNG.
pub fn features(dims: [usize; 4], phase: f64) -> Tensor<f32> {
    Tensor::from_fn(dims, |[n, c, y, x]| {
        ((n * 7 + c * 3) as f64 * 0.37 + y as f64 * 0.21 + x as f64 * 0.13 + phase).sin() as f32
    })
}

pub fn constant(dims: [usize; 4], value: f32) -> Tensor<f32> {
    Tensor::from_fn(dims, |_| value)
}

/// A small forward motion with a slight yaw, typical between video frames.
pub fn frame_motion() -> MotionTransform {
    MotionTransform::new(Rotation3::from_euler_angles(0.0, 0.0, 0.01).into_inner(), Vector3::new(0.0, -2.0, 0.05))
        .expect("valid motion")
}

pub fn camera(size: usize) -> CameraIntrinsics {
    CameraIntrinsics::from_fov(size, size, 90.0).expect("valid camera")
}

/// The 96x96 toy flight, shortened to `frames`.
pub fn toy_trajectory(frames: usize) -> Trajectory {
    let recipe = DatasetRecipe { frame_count: frames, ..DatasetRecipe::toy() };
    recipe.generate().expect("toy recipe renders").remove(0)
}
