use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PitchMode {
    /// Looking straight down, image top towards the heading.
    Nadir,
    /// Looking along the heading, tilted down by the given angle.
    Forward { pitch_degrees: f64 },
}

impl PitchMode {
    fn pitch(self) -> f64 {
        match self {
            PitchMode::Nadir => std::f64::consts::FRAC_PI_2,
            PitchMode::Forward { pitch_degrees } => pitch_degrees.to_radians(),
        }
    }
}

/// Camera-to-world rotation for a heading (radians from world +x towards
/// +y) in a z-up world.
pub fn camera_orientation(yaw: f64, mode: PitchMode) -> Matrix3<f64> {
    let (hx, hy) = (yaw.cos(), yaw.sin());
    let pitch = mode.pitch();
    let x = Vector3::new(hy, -hx, 0.0);
    let z = Vector3::new(pitch.cos() * hx, pitch.cos() * hy, -pitch.sin());
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Pose>,
    pub frame_count: usize,
    pub frame_rate: f64,
    /// Allowed camera heights (world z), meters.
    pub altitude_range: (f64, f64),
    pub pitch_mode: PitchMode,
}

pub const DEFAULT_FRAME_RATE: f64 = 20.0;

impl TrajectorySpec {
    /// Straight flight at constant height and heading.
    pub fn straight(start: Vector3<f64>, yaw: f64, distance: f64, frame_count: usize, pitch_mode: PitchMode) -> Self {
        let r = camera_orientation(yaw, pitch_mode);
        let end = start + Vector3::new(yaw.cos(), yaw.sin(), 0.0) * distance;
        TrajectorySpec {
            waypoints: vec![Pose::from_rotation(start, &r), Pose::from_rotation(end, &r)],
            frame_count,
            frame_rate: DEFAULT_FRAME_RATE,
            altitude_range: (start.z.min(end.z), start.z.max(end.z)),
            pitch_mode,
        }
    }

    /// A gently curving flight inside `[-half_extent, half_extent]^2` with
    /// `distance` meters of travel and heights drawn from `altitude_range`.
    pub fn survey(
        seed: u64,
        half_extent: f64,
        distance: f64,
        frame_count: usize,
        altitude_range: (f64, f64),
        pitch_mode: PitchMode,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let legs = 3;
        let leg = distance / legs as f64;
        let mut yaw: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut p = Vector3::new(
            rng.random_range(-0.3..0.3) * half_extent,
            rng.random_range(-0.3..0.3) * half_extent,
            rng.random_range(altitude_range.0..=altitude_range.1),
        );
        let mut waypoints = vec![Pose::from_rotation(p, &camera_orientation(yaw, pitch_mode))];
        for _ in 0..legs {
            let next = p + Vector3::new(yaw.cos(), yaw.sin(), 0.0) * leg;
            // Turn back towards the center when the next leg would leave.
            if next.x.abs() > 0.8 * half_extent || next.y.abs() > 0.8 * half_extent {
                yaw = (-p.y).atan2(-p.x);
            }
            p += Vector3::new(yaw.cos(), yaw.sin(), 0.0) * leg;
            p.z = rng.random_range(altitude_range.0..=altitude_range.1);
            waypoints.push(Pose::from_rotation(p, &camera_orientation(yaw, pitch_mode)));
            yaw += rng.random_range(-0.4..0.4);
        }
        TrajectorySpec { waypoints, frame_count, frame_rate: DEFAULT_FRAME_RATE, altitude_range, pitch_mode }
    }
}

/// Second derivatives of the natural cubic spline through `y` at knots
/// `0, 1, ..`.
fn natural_spline_moments(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for interior moments: m[i-1] + 4 m[i] + m[i+1] = 6 d2y.
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        let (a, b) = (if i > 0 { 1.0 } else { 0.0 }, 4.0);
        let denom = b - a * if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = 1.0 / denom;
        d[i] = (rhs - a * if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = d[i] - c[i] * next;
    }
    m
}

fn eval_spline(y: &[f64], m: &[f64], s: f64) -> f64 {
    let n = y.len();
    if n == 1 {
        return y[0];
    }
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    let a = 1.0 - t;
    a * y[i] + t * y[i + 1] + ((a * a * a - a) * m[i] + (t * t * t - t) * m[i + 1]) / 6.0
}

/// Poses interpolated through the waypoints: positions by a natural cubic
/// spline with uniform knots, orientations by slerp between neighbors.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<Pose>> {
    let wps = &spec.waypoints;
    if wps.len() < 2 {
        return Err(Error::Trajectory(format!("need at least 2 waypoints, got {}", wps.len())));
    }
    if spec.frame_count < 2 {
        return Err(Error::Trajectory(format!("frame_count must be at least 2, got {}", spec.frame_count)));
    }
    for w in wps {
        w.validate()?;
    }
    let all_same = wps.iter().all(|w| w.position == wps[0].position && w.orientation == wps[0].orientation);
    if all_same {
        return Ok(vec![wps[0]; spec.frame_count]);
    }
    if let Some(k) = wps.windows(2).position(|p| (p[0].position - p[1].position).norm() < 1e-9) {
        return Err(Error::Trajectory(format!("waypoints {k} and {} coincide", k + 1)));
    }
    let coords: Vec<Vec<f64>> = (0..3).map(|a| wps.iter().map(|w| w.position[a]).collect()).collect();
    let moments: Vec<Vec<f64>> = coords.iter().map(|c| natural_spline_moments(c)).collect();
    let quats: Vec<UnitQuaternion<f64>> = wps.iter().map(|w| UnitQuaternion::from_quaternion(w.orientation)).collect();
    let last = (wps.len() - 1) as f64;
    (0..spec.frame_count)
        .map(|k| {
            let s = last * k as f64 / (spec.frame_count - 1) as f64;
            let position = Vector3::new(
                eval_spline(&coords[0], &moments[0], s),
                eval_spline(&coords[1], &moments[1], s),
                eval_spline(&coords[2], &moments[2], s),
            );
            let i = (s.floor() as usize).min(wps.len() - 2);
            let t = s - i as f64;
            let (a, mut b) = (quats[i], quats[i + 1]);
            if a.coords.dot(&b.coords) < 0.0 {
                b = UnitQuaternion::new_unchecked(-b.into_inner());
            }
            let q = a.try_slerp(&b, t, 1e-12).unwrap_or(a);
            let mut q: Quaternion<f64> = q.into_inner().normalize();
            if q.w < 0.0 {
                q = -q;
            }
            Pose::new(position, q)
        })
        .collect()
}
