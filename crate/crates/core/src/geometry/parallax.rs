use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::camera::CameraIntrinsics;
use super::pose::MotionTransform;
use crate::error::{Error, Result};

/// Optical-axis depth in meters. Background pixels hold exactly `max_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Array2<f64>,
    pub max_depth: f64,
}

impl DepthMap {
    pub fn new(values: Array2<f64>, max_depth: f64) -> Result<Self> {
        if !(max_depth > 0.0) {
            return Err(Error::InvalidDepth { depth: max_depth });
        }
        if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDepth { depth: bad });
        }
        Ok(DepthMap { values, max_depth })
    }

    pub fn filled(height: usize, width: usize, depth: f64, max_depth: f64) -> Self {
        DepthMap {
            values: Array2::from_elem((height, width), depth),
            max_depth,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Perceived pixel motion, in pixels of the map's own resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallaxMap {
    pub values: Array2<f64>,
}

impl ParallaxMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| !(v >= 0.0)) {
            return Err(Error::Contract(format!("parallax must be non-negative, found {bad}")));
        }
        Ok(ParallaxMap { values })
    }
}

/// How the depth enters the parallax denominator `z * z_V + t_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DenominatorReading {
    /// `z_V` is the z component of the pixel's viewing ray (unit depth)
    /// rotated into the virtual camera, so `z * z_V` is the point's depth in
    /// that camera and the parallax equals the translational image motion.
    #[default]
    VirtualDepth,
    /// `z_V` is the point's depth in the virtual camera itself, giving the
    /// denominator `z * (z * ray_z) + t_z`.
    DepthTimesVirtualDepth,
}

/// Per-pixel constants of the parallax equation for one motion and camera:
/// the numerator `sqrt((fx tx - tz iV)^2 + (fy ty - tz jV)^2)` and the
/// rotated ray depth factor. The virtual camera shares the current camera's
/// center and the previous camera's orientation; `(iV, jV)` are measured
/// from the principal point.
#[derive(Debug, Clone)]
pub struct ParallaxField {
    numerator: Vec<f64>,
    ray_z: Vec<f64>,
    tz: f64,
    reading: DenominatorReading,
    width: usize,
    height: usize,
}

impl ParallaxField {
    pub fn new(motion: &MotionTransform, intr: &CameraIntrinsics, reading: DenominatorReading) -> Self {
        let t = motion.translation;
        let n = intr.width * intr.height;
        let mut numerator = Vec::with_capacity(n);
        let mut ray_z = Vec::with_capacity(n);
        for j in 0..intr.height {
            for i in 0..intr.width {
                let u = motion.rotation * intr.ray(i as f64, j as f64);
                if u.z > 0.0 {
                    let iv = intr.fx * u.x / u.z;
                    let jv = intr.fy * u.y / u.z;
                    let a = intr.fx * t.x - t.z * iv;
                    let b = intr.fy * t.y - t.z * jv;
                    numerator.push((a * a + b * b).sqrt());
                    ray_z.push(u.z);
                } else {
                    numerator.push(0.0);
                    ray_z.push(0.0);
                }
            }
        }
        ParallaxField {
            numerator,
            ray_z,
            tz: t.z,
            reading,
            width: intr.width,
            height: intr.height,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.numerator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerator.is_empty()
    }

    fn denominator(&self, idx: usize, z: f64) -> (f64, f64) {
        let a = self.ray_z[idx];
        match self.reading {
            DenominatorReading::VirtualDepth => (z * a + self.tz, a),
            DenominatorReading::DepthTimesVirtualDepth => (a * z * z + self.tz, 2.0 * a * z),
        }
    }

    /// Parallax of pixel `idx` at depth `z` and its derivative in `z`;
    /// `None` where the denominator is not positive.
    pub fn parallax_with_grad(&self, idx: usize, z: f64) -> Option<(f64, f64)> {
        if self.ray_z[idx] <= 0.0 {
            return None;
        }
        let (den, dden) = self.denominator(idx, z);
        if !(den > 0.0) {
            return None;
        }
        let num = self.numerator[idx];
        Some((num / den, -num * dden / (den * den)))
    }

    pub fn parallax(&self, idx: usize, z: f64) -> Option<f64> {
        self.parallax_with_grad(idx, z).map(|(p, _)| p)
    }

    /// Depth of pixel `idx` given its parallax, with `d depth / d parallax`.
    /// Degenerate pixels (zero parallax, zero numerator, points behind the
    /// camera, or depths beyond `max_depth`) return `max_depth`, derivative 0
    /// and `false`.
    pub fn depth_with_grad(&self, idx: usize, rho: f64, max_depth: f64) -> (f64, f64, bool) {
        let a = self.ray_z[idx];
        let num = self.numerator[idx];
        if !(rho > 0.0) || !(num > 0.0) || a <= 0.0 {
            return (max_depth, 0.0, false);
        }
        let den = num / rho;
        let rest = den - self.tz;
        let (z, dz) = match self.reading {
            DenominatorReading::VirtualDepth => (rest / a, -num / (rho * rho * a)),
            DenominatorReading::DepthTimesVirtualDepth => {
                if !(rest > 0.0) {
                    return (max_depth, 0.0, false);
                }
                let z = (rest / a).sqrt();
                (z, -num / (rho * rho) / (2.0 * a * z))
            }
        };
        if !(z > 0.0) || !(z < max_depth) || !z.is_finite() {
            return (max_depth, 0.0, false);
        }
        (z, dz, true)
    }
}

fn check_dims(map: (usize, usize), intr: &CameraIntrinsics) -> Result<()> {
    if map != (intr.height, intr.width) {
        return Err(Error::Shape(format!(
            "map is {}x{} but intrinsics describe {}x{}",
            map.1, map.0, intr.width, intr.height
        )));
    }
    Ok(())
}

pub fn parallax_from_depth(
    depth: &DepthMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
) -> Result<(ParallaxMap, Array2<bool>)> {
    parallax_from_depth_with(depth, motion, intr, DenominatorReading::default())
}

/// Pixel-wise parallax of a depth map. Pixels whose denominator is not
/// positive are set to 0 and masked invalid.
pub fn parallax_from_depth_with(
    depth: &DepthMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
    reading: DenominatorReading,
) -> Result<(ParallaxMap, Array2<bool>)> {
    check_dims(depth.dim(), intr)?;
    motion.validate()?;
    let field = ParallaxField::new(motion, intr, reading);
    let (h, w) = depth.dim();
    let mut values = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for ((j, i), &z) in depth.values.indexed_iter() {
        if let Some(p) = field.parallax(j * w + i, z) {
            values[[j, i]] = p;
            valid[[j, i]] = true;
        }
    }
    Ok((ParallaxMap { values }, valid))
}

pub fn depth_from_parallax(
    parallax: &ParallaxMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
    max_depth: f64,
) -> Result<(DepthMap, Array2<bool>)> {
    depth_from_parallax_with(parallax, motion, intr, max_depth, DenominatorReading::default())
}

/// Inverts the parallax equation for depth, pixel by pixel. Degenerate
/// pixels are clamped to `max_depth` and masked invalid.
pub fn depth_from_parallax_with(
    parallax: &ParallaxMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
    max_depth: f64,
    reading: DenominatorReading,
) -> Result<(DepthMap, Array2<bool>)> {
    check_dims(parallax.values.dim(), intr)?;
    motion.validate()?;
    if !(max_depth > 0.0) {
        return Err(Error::InvalidDepth { depth: max_depth });
    }
    let field = ParallaxField::new(motion, intr, reading);
    let (h, w) = parallax.values.dim();
    let mut values = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for ((j, i), &rho) in parallax.values.indexed_iter() {
        let (z, _, ok) = field.depth_with_grad(j * w + i, rho, max_depth);
        values[[j, i]] = z;
        valid[[j, i]] = ok;
    }
    Ok((DepthMap { values, max_depth }, valid))
}
