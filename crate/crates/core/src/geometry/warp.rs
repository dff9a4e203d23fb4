use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;

use super::camera::CameraIntrinsics;
use super::parallax::DepthMap;
use super::pose::MotionTransform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Interpolation {
    /// Use for class-index maps, which must never be averaged.
    Nearest,
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
}

/// Per-pixel rotated viewing rays of the target frame, so that a pixel at
/// depth `z` lands at `motion.apply(z * ray)` in the source frame.
#[derive(Debug, Clone)]
pub struct ReprojectionField {
    intr: CameraIntrinsics,
    rays: Vec<[f64; 3]>,
    translation: [f64; 3],
    identity: bool,
}

impl ReprojectionField {
    pub fn new(motion: &MotionTransform, intr: &CameraIntrinsics) -> Self {
        let mut rays = Vec::with_capacity(intr.width * intr.height);
        for j in 0..intr.height {
            for i in 0..intr.width {
                let u = motion.rotation * intr.ray(i as f64, j as f64);
                rays.push([u.x, u.y, u.z]);
            }
        }
        let t = motion.translation;
        ReprojectionField {
            intr: *intr,
            rays,
            translation: [t.x, t.y, t.z],
            identity: motion.rotation == Matrix3::identity() && t == Vector3::zeros(),
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intr
    }

    /// Source-frame pixel coordinates of row-major pixel `idx` at depth `z`,
    /// or `None` when the point falls behind the source camera.
    pub fn reproject(&self, idx: usize, z: f64) -> Option<(f64, f64)> {
        self.reproject_with_grad(idx, z).map(|(qi, qj, _, _)| (qi, qj))
    }

    /// As [`Self::reproject`], also returning `d qi / dz` and `d qj / dz`.
    pub fn reproject_with_grad(&self, idx: usize, z: f64) -> Option<(f64, f64, f64, f64)> {
        if self.identity {
            if !(z > 0.0) || !z.is_finite() {
                return None;
            }
            let w = self.intr.width;
            return Some(((idx % w) as f64, (idx / w) as f64, 0.0, 0.0));
        }
        let u = self.rays[idx];
        let t = self.translation;
        let den = z * u[2] + t[2];
        if !(den > 0.0) || !z.is_finite() {
            return None;
        }
        let nx = z * u[0] + t[0];
        let ny = z * u[1] + t[1];
        let qi = self.intr.fx * nx / den + self.intr.cx;
        let qj = self.intr.fy * ny / den + self.intr.cy;
        let den2 = den * den;
        let dqi = self.intr.fx * (u[0] * t[2] - u[2] * t[0]) / den2;
        let dqj = self.intr.fy * (u[1] * t[2] - u[2] * t[1]) / den2;
        Some((qi, qj, dqi, dqj))
    }
}

/// Locations this close outside the image border still count as inside, so
/// rounding noise in an identity reprojection does not invalidate edge pixels.
const EDGE_SLACK: f64 = 1e-9;

/// Bilinear tap for a continuous location: top-left corner and fractional
/// offsets. `None` when the location is outside `[0, w-1] x [0, h-1]`.
pub(crate) fn bilinear_tap(qi: f64, qj: f64, w: usize, h: usize) -> Option<(usize, usize, f64, f64)> {
    let (wm, hm) = ((w - 1) as f64, (h - 1) as f64);
    if !(qi >= -EDGE_SLACK && qi <= wm + EDGE_SLACK && qj >= -EDGE_SLACK && qj <= hm + EDGE_SLACK) {
        return None;
    }
    let (qi, qj) = (qi.clamp(0.0, wm), qj.clamp(0.0, hm));
    let i0 = (qi.floor() as usize).min(w.saturating_sub(2));
    let j0 = (qj.floor() as usize).min(h.saturating_sub(2));
    Some((i0, j0, qi - i0 as f64, qj - j0 as f64))
}

pub(crate) fn nearest_tap(qi: f64, qj: f64, w: usize, h: usize) -> Option<(usize, usize)> {
    let i = (qi + 0.5).floor();
    let j = (qj + 0.5).floor();
    if i >= 0.0 && j >= 0.0 && i < w as f64 && j < h as f64 {
        Some((i as usize, j as usize))
    } else {
        None
    }
}

pub fn sample_bilinear(map: &Array2<f64>, qi: f64, qj: f64) -> Option<f64> {
    let (h, w) = map.dim();
    let (i0, j0, fi, fj) = bilinear_tap(qi, qj, w, h)?;
    let i1 = (i0 + 1).min(w - 1);
    let j1 = (j0 + 1).min(h - 1);
    let top = map[[j0, i0]] * (1.0 - fi) + map[[j0, i1]] * fi;
    let bottom = map[[j1, i0]] * (1.0 - fi) + map[[j1, i1]] * fi;
    Some(top * (1.0 - fj) + bottom * fj)
}

pub fn sample_nearest<T: Copy>(map: &Array2<T>, qi: f64, qj: f64) -> Option<T> {
    let (h, w) = map.dim();
    nearest_tap(qi, qj, w, h).map(|(i, j)| map[[j, i]])
}

fn check_shapes(src: (usize, usize), depth: &DepthMap, intr: &CameraIntrinsics) -> Result<()> {
    let d = depth.values.dim();
    if src != d || d != (intr.height, intr.width) {
        return Err(Error::Shape(format!(
            "source {}x{}, depth {}x{}, intrinsics {}x{} must agree",
            src.1, src.0, d.1, d.0, intr.width, intr.height
        )));
    }
    Ok(())
}

/// Backward warp: every target pixel (whose depth is `depth`) samples the
/// source frame at `project(motion * unproject(pixel, depth))`. Pixels that
/// land outside the source image or behind the source camera are set to 0
/// and flagged invalid.
pub fn warp_map(
    source: &Array2<f64>,
    depth: &DepthMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
    interpolation: Interpolation,
) -> Result<WarpResult> {
    check_shapes(source.dim(), depth, intr)?;
    motion.validate()?;
    let field = ReprojectionField::new(motion, intr);
    let (h, w) = source.dim();
    let mut values = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for j in 0..h {
        for i in 0..w {
            let Some((qi, qj)) = field.reproject(j * w + i, depth.values[[j, i]]) else {
                continue;
            };
            let sample = match interpolation {
                Interpolation::Nearest => sample_nearest(source, qi, qj),
                Interpolation::Bilinear => sample_bilinear(source, qi, qj),
            };
            if let Some(v) = sample {
                values[[j, i]] = v;
                valid[[j, i]] = true;
            }
        }
    }
    Ok(WarpResult { values, valid })
}

/// Nearest-neighbor warp of a class-index map.
pub fn warp_labels(
    labels: &Array2<u8>,
    depth: &DepthMap,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
) -> Result<(Array2<u8>, Array2<bool>)> {
    let as_f64 = labels.mapv(f64::from);
    let warped = warp_map(&as_f64, depth, motion, intr, Interpolation::Nearest)?;
    Ok((warped.values.mapv(|v| v as u8), warped.valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, unproject};
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::from_fov(32, 24, 90.0).unwrap()
    }

    fn constant_depth(intr: &CameraIntrinsics, z: f64) -> DepthMap {
        DepthMap::new(Array2::from_elem((intr.height, intr.width), z), 200.0).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |_| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn identity_warp_is_exact() {
        let intr = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = random_map(&mut rng, intr.height, intr.width);
        let depth = DepthMap::new(
            Array2::from_shape_fn((intr.height, intr.width), |_| rng.random_range(1.0..100.0)),
            200.0,
        )
        .unwrap();
        let out = warp_map(&src, &depth, &MotionTransform::identity(), &intr, Interpolation::Nearest).unwrap();
        assert_eq!(out.values, src);
        assert!(out.valid.iter().all(|&v| v));
        let out = warp_map(&src, &depth, &MotionTransform::identity(), &intr, Interpolation::Bilinear).unwrap();
        assert!(out.valid.iter().all(|&v| v));
        for (a, b) in out.values.iter().zip(src.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    /// Per-pixel brute force: unproject, move, project, read the source.
    fn oracle_location(intr: &CameraIntrinsics, m: &MotionTransform, i: usize, j: usize, z: f64) -> (f64, f64) {
        let p = unproject((i as f64, j as f64), z, intr).unwrap();
        project(&m.apply(&p), intr).unwrap()
    }

    #[test]
    fn lateral_translation_shifts_uniformly() {
        let intr = intr();
        let z = 20.0;
        let tx = 2.5;
        let m = MotionTransform::new(Matrix3::identity(), Vector3::new(tx, 0.0, 0.0)).unwrap();
        let shift = intr.fx * tx / z;
        let src = Array2::from_shape_fn((intr.height, intr.width), |(j, i)| (i * 3 + j * 7) as f64);
        let out = warp_map(&src, &constant_depth(&intr, z), &m, &intr, Interpolation::Bilinear).unwrap();
        for j in 0..intr.height {
            for i in 0..intr.width {
                let (qi, qj) = oracle_location(&intr, &m, i, j, z);
                assert!((qi - (i as f64 + shift)).abs() < 1e-9);
                assert!((qj - j as f64).abs() < 1e-9);
                if qi <= (intr.width - 1) as f64 {
                    assert!(out.valid[[j, i]]);
                    let expect = 3.0 * qi + 7.0 * j as f64;
                    assert!((out.values[[j, i]] - expect).abs() < 1e-9);
                } else {
                    assert!(!out.valid[[j, i]]);
                    assert_eq!(out.values[[j, i]], 0.0);
                }
            }
        }
    }

    #[test]
    fn forward_translation_expands_radially() {
        let intr = intr();
        let z = 10.0;
        // The target camera sits 1 m closer to the plane than the source.
        let m = MotionTransform::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let field = ReprojectionField::new(&m, &intr);
        for j in 0..intr.height {
            for i in 0..intr.width {
                let (qi, qj) = field.reproject(j * intr.width + i, z).unwrap();
                let (oi, oj) = oracle_location(&intr, &m, i, j, z);
                assert!((qi - oi).abs() < 1e-9 && (qj - oj).abs() < 1e-9);
                // Displacement from source location to target pixel points
                // away from the principal point.
                let (di, dj) = (i as f64 - qi, j as f64 - qj);
                let (ri, rj) = (i as f64 - intr.cx, j as f64 - intr.cy);
                assert!(di * ri + dj * rj >= 0.0);
                if ri.abs() + rj.abs() > 1e-9 {
                    assert!((di * rj - dj * ri).abs() < 1e-9, "not radial at ({i},{j})");
                    assert!(di * ri + dj * rj > 0.0);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let intr = intr();
        let src = Array2::zeros((3, 3));
        let err = warp_map(&src, &constant_depth(&intr, 1.0), &MotionTransform::identity(), &intr, Interpolation::Nearest);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn labels_use_nearest() {
        let intr = intr();
        let labels = Array2::from_shape_fn((intr.height, intr.width), |(_, i)| (i % 9) as u8);
        let m = MotionTransform::new(Matrix3::identity(), Vector3::new(0.3, 0.0, 0.0)).unwrap();
        let (out, valid) = warp_labels(&labels, &constant_depth(&intr, 10.0), &m, &intr).unwrap();
        for ((j, i), &v) in out.indexed_iter() {
            if valid[[j, i]] {
                assert!(v < 9);
            }
        }
    }

    #[test]
    fn reprojection_gradient_matches_finite_difference() {
        let intr = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MotionTransform::new(
            *nalgebra::Rotation3::from_euler_angles(0.05, -0.02, 0.1).matrix(),
            Vector3::new(0.4, -0.3, 0.6),
        )
        .unwrap();
        let field = ReprojectionField::new(&m, &intr);
        for _ in 0..100 {
            let idx = rng.random_range(0..intr.width * intr.height);
            let z = rng.random_range(2.0..50.0);
            let (_, _, di, dj) = field.reproject_with_grad(idx, z).unwrap();
            let h = 1e-6;
            let (a, b) = field.reproject(idx, z + h).unwrap();
            let (c, d) = field.reproject(idx, z - h).unwrap();
            assert!(((a - c) / (2.0 * h) - di).abs() < 1e-6);
            assert!(((b - d) / (2.0 * h) - dj).abs() < 1e-6);
        }
    }
}
