//! Procedural aerial scenes with exact depth, class maps and poses.

pub mod dataset;
pub mod filter;
pub mod render;
pub mod scene;
pub mod trajectory;

pub use dataset::{decode_depth, default_depth_scale, encode_depth, read_dataset, write_dataset, DatasetManifest, FrameSample, Trajectory, TrajectoryMeta};
pub use filter::{curate, median_filter, DEFAULT_MEDIAN_WINDOW};
pub use render::{RenderedFrame, Renderer};
pub use scene::{SceneKind, SceneSpec};
pub use trajectory::{camera_orientation, generate_trajectory, PitchMode, TrajectorySpec};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{Class, DEFAULT_PALETTE};
use crate::error::{Error, Result};
use crate::geometry::{relative_transform, sample_nearest, CameraIntrinsics, Pose, ReprojectionField};

/// Minimum share of a frame's pixels that must be visible in its predecessor.
pub const MIN_FRAME_OVERLAP: f64 = 0.3;

pub fn render_frame(scene: &SceneSpec, pose: &Pose, intr: &CameraIntrinsics, max_depth: f64) -> Result<FrameSample> {
    let f = Renderer::new(scene)?.render(pose, intr, max_depth)?;
    Ok(FrameSample { rgb: f.rgb, depth: f.depth, seg: f.seg, pose: *pose, intrinsics: *intr, frame_index: 0 })
}

/// Share of frame `b`'s pixels that reproject inside frame `a`.
pub fn overlap_ratio(a: &FrameSample, b: &FrameSample) -> Result<f64> {
    let field = ReprojectionField::new(&relative_transform(&a.pose, &b.pose)?, &b.intrinsics);
    let (h, w) = b.depth.dim();
    let (wa, ha) = (a.intrinsics.width as f64, a.intrinsics.height as f64);
    let inside = b
        .depth
        .values
        .iter()
        .enumerate()
        .filter(|&(k, &z)| {
            field
                .reproject(k, z)
                .is_some_and(|(qi, qj)| qi > -0.5 && qj > -0.5 && qi < wa - 0.5 && qj < ha - 0.5)
        })
        .count();
    Ok(inside as f64 / (h * w) as f64)
}

/// Agreement of frame `b`'s class map with frame `a`'s labels warped through
/// the true depth and motion. Only non-sky pixels of `b` whose point is
/// visible in `a` count: the depth found in `a` must match the point's depth
/// in `a` within `relative_tolerance`. Returns `(agreement, counted)`.
pub fn gt_consistency(a: &FrameSample, b: &FrameSample, relative_tolerance: f64) -> Result<(f64, usize)> {
    let motion = relative_transform(&a.pose, &b.pose)?;
    let sky = Class::Sky as u8;
    let (h, w) = b.depth.dim();
    let (mut agree, mut counted) = (0usize, 0usize);
    for j in 0..h {
        for i in 0..w {
            if b.seg[[j, i]] == sky {
                continue;
            }
            let xa = motion.apply(&(b.intrinsics.ray(i as f64, j as f64) * b.depth.values[[j, i]]));
            if xa.z <= 0.0 {
                continue;
            }
            let qi = a.intrinsics.fx * xa.x / xa.z + a.intrinsics.cx;
            let qj = a.intrinsics.fy * xa.y / xa.z + a.intrinsics.cy;
            let (Some(za), Some(la)) = (sample_nearest(&a.depth.values, qi, qj), sample_nearest(&a.seg, qi, qj)) else {
                continue;
            };
            if (za - xa.z).abs() > relative_tolerance * xa.z {
                continue;
            }
            counted += 1;
            if la == b.seg[[j, i]] {
                agree += 1;
            }
        }
    }
    Ok((if counted == 0 { 1.0 } else { agree as f64 / counted as f64 }, counted))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlightPattern {
    /// Constant heading at the lowest altitude of the range.
    Straight,
    /// Curving multi-leg flight with varying altitude.
    Survey,
}

/// Everything needed to regenerate a dataset bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecipe {
    pub seed: u64,
    pub scene: SceneKind,
    pub half_extent: f64,
    pub trajectories: usize,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub hfov_degrees: f64,
    pub altitude_range: (f64, f64),
    pub pitch_mode: PitchMode,
    pub pattern: FlightPattern,
    /// Meters traveled between consecutive frames.
    pub speed: f64,
    pub max_depth: f64,
    pub median_window: usize,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        DatasetRecipe {
            seed: 0,
            scene: SceneKind::Rural,
            half_extent: 150.0,
            trajectories: 4,
            frame_count: 64,
            width: 128,
            height: 128,
            hfov_degrees: 90.0,
            altitude_range: (30.0, 60.0),
            pitch_mode: PitchMode::Nadir,
            pattern: FlightPattern::Survey,
            speed: 2.0,
            max_depth: 200.0,
            median_window: DEFAULT_MEDIAN_WINDOW,
        }
    }
}

fn mix_seed(seed: u64, k: u64) -> u64 {
    seed ^ (k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl DatasetRecipe {
    /// Single straight nadir flight of 32 frames at 96x96 over an urban block.
    pub fn toy() -> Self {
        DatasetRecipe {
            seed: 7,
            scene: SceneKind::Urban,
            half_extent: 80.0,
            trajectories: 1,
            frame_count: 32,
            width: 96,
            height: 96,
            altitude_range: (40.0, 40.0),
            pattern: FlightPattern::Straight,
            median_window: 1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trajectories == 0 || self.frame_count < 2 {
            return bad("need at least one trajectory of at least 2 frames".into());
        }
        if !(self.altitude_range.0 > 0.0 && self.altitude_range.0 <= self.altitude_range.1) {
            return bad(format!("invalid altitude range {:?}", self.altitude_range));
        }
        if !(self.speed > 0.0 && self.half_extent > 0.0 && self.max_depth > self.altitude_range.1) {
            return bad("speed and extent must be positive and max_depth above the flight altitude".into());
        }
        if self.median_window == 0 {
            return bad("median_window must be at least 1".into());
        }
        CameraIntrinsics::from_fov(self.width, self.height, self.hfov_degrees)?;
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.width, self.height, self.hfov_degrees)
    }

    pub fn trajectory_spec(&self, k: usize) -> TrajectorySpec {
        let seed = mix_seed(self.seed, 2 * k as u64);
        let distance = self.speed * (self.frame_count - 1) as f64;
        match self.pattern {
            FlightPattern::Straight => {
                let yaw = (seed % 360) as f64 * std::f64::consts::PI / 180.0;
                let start = Vector3::new(-0.5 * distance * yaw.cos(), -0.5 * distance * yaw.sin(), self.altitude_range.0);
                TrajectorySpec::straight(start, yaw, distance, self.frame_count, self.pitch_mode)
            }
            FlightPattern::Survey => TrajectorySpec::survey(
                seed,
                self.half_extent,
                distance,
                self.frame_count,
                self.altitude_range,
                self.pitch_mode,
            ),
        }
    }

    /// Renders trajectory `k`. Frames render in parallel; each frame only
    /// depends on its pose, so the output does not depend on thread count.
    pub fn render_trajectory(&self, k: usize) -> Result<Trajectory> {
        self.validate()?;
        let intr = self.intrinsics()?;
        let scene_seed = mix_seed(self.seed, 2 * k as u64 + 1);
        let scene = SceneSpec::procedural(scene_seed, self.scene, self.half_extent);
        let renderer = Renderer::new(&scene)?;
        let poses = generate_trajectory(&self.trajectory_spec(k))?;
        let frames = poses
            .par_iter()
            .enumerate()
            .map(|(idx, pose)| {
                let f = renderer.render(pose, &intr, self.max_depth)?;
                let (depth, seg) = curate(&f.depth, &f.seg, self.median_window)?;
                Ok(FrameSample { rgb: f.rgb, depth, seg, pose: *pose, intrinsics: intr, frame_index: idx })
            })
            .collect::<Result<Vec<_>>>()?;
        for pair in frames.windows(2) {
            let r = overlap_ratio(&pair[0], &pair[1])?;
            if r <= MIN_FRAME_OVERLAP {
                return Err(Error::Trajectory(format!(
                    "trajectory {k}: frames {} and {} overlap by only {r:.3}",
                    pair[0].frame_index, pair[1].frame_index
                )));
            }
        }
        Ok(Trajectory {
            id: format!("{k:03}"),
            frames,
            frame_rate: trajectory::DEFAULT_FRAME_RATE,
            seed: scene_seed,
            class_palette: DEFAULT_PALETTE,
        })
    }

    pub fn generate(&self) -> Result<Vec<Trajectory>> {
        (0..self.trajectories).map(|k| self.render_trajectory(k)).collect()
    }
}
