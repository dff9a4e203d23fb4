use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square pixels with the principal point at the image center and the
    /// given horizontal field of view. A 90 degree FOV gives `fx = width / 2`.
    pub fn from_fov(width: usize, height: usize, hfov_degrees: f64) -> Result<Self> {
        if !(hfov_degrees > 0.0 && hfov_degrees < 180.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "field of view {hfov_degrees} must lie in (0, 180)"
            )));
        }
        let fx = (width as f64 / 2.0) / (hfov_degrees.to_radians() / 2.0).tan();
        Self::new(
            fx,
            fx,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("empty image".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of the same camera sampled `factor` times coarser, with
    /// pixel centers of the coarse grid at the center of each block.
    pub fn downscaled(&self, factor: usize) -> Self {
        let f = factor as f64;
        CameraIntrinsics {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: (self.cx + 0.5) / f - 0.5,
            cy: (self.cy + 0.5) / f - 0.5,
            width: self.width / factor,
            height: self.height / factor,
        }
    }

    /// Viewing ray through a pixel, scaled so its z component is 1.
    pub fn ray(&self, i: f64, j: f64) -> Vector3<f64> {
        Vector3::new((i - self.cx) / self.fx, (j - self.cy) / self.fy, 1.0)
    }

    /// `fx fy cx cy width height` on one line.
    pub fn to_record(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height
        )
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let fields: Vec<&str> = record.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::InvalidIntrinsics(format!(
                "expected 6 fields, found {}",
                fields.len()
            )));
        }
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidIntrinsics(format!("bad number {s:?}: {e}")))
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::InvalidIntrinsics(format!("bad size {s:?}: {e}")))
        };
        Self::new(
            float(fields[0])?,
            float(fields[1])?,
            float(fields[2])?,
            float(fields[3])?,
            int(fields[4])?,
            int(fields[5])?,
        )
    }
}

/// Projects a camera-frame point to pixel coordinates `(i, j)`.
pub fn project(point: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera { z: point.z });
    }
    Ok((
        intr.fx * point.x / point.z + intr.cx,
        intr.fy * point.y / point.z + intr.cy,
    ))
}

/// Back-projects a pixel with known optical-axis depth to a camera-frame point.
pub fn unproject(pixel: (f64, f64), depth: f64, intr: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth { depth });
    }
    Ok(intr.ray(pixel.0, pixel.1) * depth)
}
