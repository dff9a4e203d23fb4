//! Pinhole camera model, inter-frame motion, reprojection, and the
//! parallax/depth conversion shared by the network and the renderer.
//!
//! Camera axes: +z forward along the optical axis, +x right, +y down.
//! Pixel `(i, j)` is column `i`, row `j`; integer coordinates are pixel
//! centers. Maps are stored row-major as `Array2` indexed `[[j, i]]`.

mod camera;
mod cloud;
mod parallax;
mod pose;
pub(crate) mod warp;

pub use camera::{project, unproject, CameraIntrinsics};
pub use cloud::{point_cloud_from_maps, LabeledPointCloud, PixelAttributes};
pub use parallax::{
    depth_from_parallax, depth_from_parallax_with, parallax_from_depth, parallax_from_depth_with,
    DenominatorReading, DepthMap, ParallaxField, ParallaxMap,
};
pub use pose::{
    matrix_to_quaternion, quaternion_to_matrix, relative_transform, MotionTransform, Pose,
    UNIT_QUATERNION_TOLERANCE,
};
pub use warp::{
    sample_bilinear, sample_nearest, warp_labels, warp_map, Interpolation, ReprojectionField,
    WarpResult,
};
