use ndarray::{Array2, Array3};
use nalgebra::Vector3;

use super::camera::{unproject, CameraIntrinsics};
use super::parallax::DepthMap;
use crate::classes::DEFAULT_PALETTE;
use crate::error::{Error, Result};

/// Per-pixel attributes carried into the point cloud.
#[derive(Debug, Clone, Copy)]
pub enum PixelAttributes<'a> {
    /// Class indices, colored with the default palette.
    Labels(&'a Array2<u8>),
    /// `H x W x 3` RGB image.
    Rgb(&'a Array3<u8>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    /// Camera-frame points in meters.
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<Option<u8>>,
    pub colors: Vec<[u8; 3]>,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point per pixel with depth strictly below `max_depth_trunc`.
pub fn point_cloud_from_maps(
    depth: &DepthMap,
    attributes: PixelAttributes<'_>,
    intr: &CameraIntrinsics,
    max_depth_trunc: f64,
) -> Result<LabeledPointCloud> {
    let (h, w) = depth.dim();
    let attr_dim = match attributes {
        PixelAttributes::Labels(l) => l.dim(),
        PixelAttributes::Rgb(rgb) => {
            let (ah, aw, c) = rgb.dim();
            if c != 3 {
                return Err(Error::Shape(format!("rgb image has {c} channels")));
            }
            (ah, aw)
        }
    };
    if attr_dim != (h, w) || (intr.height, intr.width) != (h, w) {
        return Err(Error::Shape(format!(
            "depth {}x{}, attributes {}x{}, intrinsics {}x{}",
            w, h, attr_dim.1, attr_dim.0, intr.width, intr.height
        )));
    }
    let mut cloud = LabeledPointCloud::default();
    for ((j, i), &z) in depth.values.indexed_iter() {
        if !(z < max_depth_trunc) || !(z > 0.0) {
            continue;
        }
        cloud.points.push(unproject((i as f64, j as f64), z, intr)?);
        match attributes {
            PixelAttributes::Labels(labels) => {
                let label = labels[[j, i]];
                cloud.labels.push(Some(label));
                cloud
                    .colors
                    .push(DEFAULT_PALETTE.get(label as usize).copied().unwrap_or([255, 255, 255]));
            }
            PixelAttributes::Rgb(rgb) => {
                cloud.labels.push(None);
                cloud.colors.push([rgb[[j, i, 0]], rgb[[j, i, 1]], rgb[[j, i, 2]]]);
            }
        }
    }
    Ok(cloud)
}
