use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation of a quaternion norm from 1 accepted as a rotation.
pub const UNIT_QUATERNION_TOLERANCE: f64 = 1e-6;

/// Absolute camera pose: `world = R * camera + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    /// Unit quaternion stored as `(w, x, y, z)` coordinates.
    pub orientation: Quaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Quaternion<f64>) -> Result<Self> {
        let pose = Pose {
            position,
            orientation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: Quaternion::identity(),
        }
    }

    pub fn from_rotation(position: Vector3<f64>, rotation: &Matrix3<f64>) -> Self {
        Pose {
            position,
            orientation: matrix_to_quaternion(rotation),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.orientation.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_QUATERNION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "orientation quaternion has norm {norm}"
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite position".into()));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        quaternion_to_matrix(&self.orientation)
    }
}

/// Rotation matrix of a unit quaternion (renormalized first).
pub fn quaternion_to_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(*q)
        .to_rotation_matrix()
        .into_inner()
}

/// Unit quaternion of a rotation matrix, with non-negative `w`.
pub fn matrix_to_quaternion(m: &Matrix3<f64>) -> Quaternion<f64> {
    let rot = Rotation3::from_matrix_unchecked(*m);
    let q = UnitQuaternion::from_rotation_matrix(&rot).into_inner();
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

/// Rigid motion between two camera frames `a` and `b`, mapping points
/// expressed in frame `b` to frame `a`: `x_a = rotation * x_b + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl MotionTransform {
    pub fn identity() -> Self {
        MotionTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let m = MotionTransform {
            rotation,
            translation,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidPose(format!(
                "rotation is not proper orthonormal (orthogonality error {ortho:e}, det {det})"
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// `self` maps b to a, `next` maps c to b; the result maps c to a.
    pub fn compose(&self, next: &MotionTransform) -> MotionTransform {
        MotionTransform {
            rotation: self.rotation * next.rotation,
            translation: self.rotation * next.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> MotionTransform {
        let rt = self.rotation.transpose();
        MotionTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Motion seen in a camera whose axes are changed by the orthogonal
    /// matrix `basis` (a reflection or an image-plane rotation).
    pub fn conjugated(&self, basis: &Matrix3<f64>) -> MotionTransform {
        MotionTransform {
            rotation: basis * self.rotation * basis.transpose(),
            translation: basis * self.translation,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn has_translation(&self) -> bool {
        self.translation.norm() > 0.0
    }

    pub fn approx_eq(&self, other: &MotionTransform, tol: f64) -> bool {
        (self.rotation - other.rotation).amax() <= tol
            && (self.translation - other.translation).amax() <= tol
    }
}

/// Motion from frame `a` to the next frame `b`:
/// `t = R_a^-1 (p_b - p_a)` and `r = R_a^-1 R_b`.
pub fn relative_transform(pose_a: &Pose, pose_b: &Pose) -> Result<MotionTransform> {
    pose_a.validate()?;
    pose_b.validate()?;
    let ra_inv = pose_a.rotation().transpose();
    Ok(MotionTransform {
        rotation: ra_inv * pose_b.rotation(),
        translation: ra_inv * (pose_b.position - pose_a.position),
    })
}
