use nalgebra::Matrix3;
use ndarray::{Array2, Array3};
use rand::Rng;

use super::config::{AugmentConfig, RotationAug};
use crate::error::{Error, Result};
use crate::geometry::{relative_transform, CameraIntrinsics, MotionTransform};
use crate::synthgen::FrameSample;

/// A training sequence in image space: the poses are reduced to the motions
/// between neighbors, so mirrored cameras stay representable.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainWindow {
    /// `[H, W, 3]` in `[0, 1]`.
    pub rgb: Vec<Array3<f32>>,
    pub depth: Vec<Array2<f64>>,
    pub seg: Vec<Array2<u8>>,
    /// `motions[t - 1]` maps frame `t` coordinates into frame `t - 1`.
    pub motions: Vec<MotionTransform>,
    pub intr: CameraIntrinsics,
    pub max_depth: f64,
}

impl TrainWindow {
    pub fn from_frames(frames: &[FrameSample]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Contract("empty window".into()))?;
        if frames.iter().any(|f| f.intrinsics != first.intrinsics) {
            return Err(Error::Contract("frames of a window must share intrinsics".into()));
        }
        let motions = frames
            .windows(2)
            .map(|p| relative_transform(&p[0].pose, &p[1].pose))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainWindow {
            rgb: frames.iter().map(|f| f.rgb.mapv(|v| v as f32 / 255.0)).collect(),
            depth: frames.iter().map(|f| f.depth.values.clone()).collect(),
            seg: frames.iter().map(|f| f.seg.clone()).collect(),
            motions,
            intr: first.intrinsics,
            max_depth: first.depth.max_depth,
        })
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    fn remap(&self, basis: &Matrix3<f64>, intr: CameraIntrinsics, src: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let (h, w) = (intr.height, intr.width);
        let map2 = |m: &Array2<f64>| {
            Array2::from_shape_fn((h, w), |(j, i)| {
                let (sj, si) = src(j, i);
                m[[sj, si]]
            })
        };
        TrainWindow {
            rgb: self
                .rgb
                .iter()
                .map(|m| {
                    Array3::from_shape_fn((h, w, 3), |(j, i, c)| {
                        let (sj, si) = src(j, i);
                        m[[sj, si, c]]
                    })
                })
                .collect(),
            depth: self.depth.iter().map(map2).collect(),
            seg: self
                .seg
                .iter()
                .map(|m| {
                    Array2::from_shape_fn((h, w), |(j, i)| {
                        let (sj, si) = src(j, i);
                        m[[sj, si]]
                    })
                })
                .collect(),
            motions: self.motions.iter().map(|m| m.conjugated(basis)).collect(),
            intr,
            max_depth: self.max_depth,
        }
    }

    /// Mirror left-right; the camera x axis flips with the image.
    pub fn flipped(&self) -> Self {
        let w = self.intr.width;
        let intr = CameraIntrinsics { cx: (w - 1) as f64 - self.intr.cx, ..self.intr };
        let basis = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        self.remap(&basis, intr, |j, i| (j, w - 1 - i))
    }

    /// Quarter turn clockwise: pixel `(i, j)` moves to `(H - 1 - j, i)`.
    pub fn rotated90(&self) -> Self {
        let k = self.intr;
        let h = k.height;
        let intr = CameraIntrinsics {
            fx: k.fy,
            fy: k.fx,
            cx: (h - 1) as f64 - k.cy,
            cy: k.cx,
            width: k.height,
            height: k.width,
        };
        let basis = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        self.remap(&basis, intr, |j, i| (h - 1 - i, j))
    }

    pub fn rotated(&self, quarter_turns: u8) -> Self {
        (0..quarter_turns % 4).fold(self.clone(), |w, _| w.rotated90())
    }
}

/// One draw of every augmentation, shared by all frames of a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub quarter_turns: u8,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams { flip: false, quarter_turns: 0, brightness: 0.0, contrast: 1.0, saturation: 1.0, hue: 0.0 }
    }

    pub fn sample(cfg: &AugmentConfig, square: bool, rng: &mut impl Rng) -> Self {
        let mut p = Self::identity();
        let sym = |rng: &mut dyn rand::RngCore, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        if cfg.flip {
            p.flip = rng.random_bool(0.5);
        }
        p.quarter_turns = match (cfg.rotation, square) {
            (RotationAug::Off, _) => 0,
            (RotationAug::Quarter, true) => rng.random_range(0..4),
            _ => 2 * rng.random_range(0..2u8),
        };
        if cfg.color {
            p.brightness = sym(rng, cfg.brightness);
            p.contrast = 1.0 + sym(rng, cfg.contrast);
            p.saturation = 1.0 + sym(rng, cfg.saturation);
            p.hue = sym(rng, cfg.hue);
        }
        p
    }
}

/// Brightness, contrast, saturation and hue (rotation in the YIQ chroma
/// plane), clamped to `[0, 1]`.
pub fn color_jitter(rgb: &Array3<f32>, p: &AugmentParams) -> Array3<f32> {
    let mut out = rgb.mapv(|v| v as f64 + p.brightness);
    let gray = |r: f64, g: f64, b: f64| 0.299 * r + 0.587 * g + 0.114 * b;
    let n = (out.len() / 3) as f64;
    let mean = out.outer_iter().flat_map(|row| row.outer_iter().map(|px| gray(px[0], px[1], px[2])).collect::<Vec<_>>()).sum::<f64>() / n;
    let (cos, sin) = (p.hue.cos(), p.hue.sin());
    for mut row in out.outer_iter_mut() {
        for mut px in row.outer_iter_mut() {
            let mut c = [px[0], px[1], px[2]].map(|v| mean + p.contrast * (v - mean));
            let y = gray(c[0], c[1], c[2]);
            c = c.map(|v| y + p.saturation * (v - y));
            let i = 0.596 * c[0] - 0.274 * c[1] - 0.322 * c[2];
            let q = 0.211 * c[0] - 0.523 * c[1] + 0.312 * c[2];
            let (di, dq) = (cos * i - sin * q - i, sin * i + cos * q - q);
            c = [c[0] + 0.956 * di + 0.621 * dq, c[1] - 0.272 * di - 0.647 * dq, c[2] - 1.106 * di + 1.703 * dq];
            for k in 0..3 {
                px[k] = c[k].clamp(0.0, 1.0);
            }
        }
    }
    out.mapv(|v| v as f32)
}

pub fn apply(window: &TrainWindow, p: &AugmentParams) -> TrainWindow {
    let mut w = if p.flip { window.flipped() } else { window.clone() };
    if p.quarter_turns % 4 != 0 {
        w = w.rotated(p.quarter_turns);
    }
    let geometric_only = AugmentParams { flip: p.flip, quarter_turns: p.quarter_turns, ..AugmentParams::identity() };
    if *p != geometric_only {
        w.rgb = w.rgb.iter().map(|m| color_jitter(m, p)).collect();
    }
    w
}

/// Draws parameters from `rng` and applies them to the whole window.
pub fn augment(window: &TrainWindow, cfg: &AugmentConfig, rng: &mut impl Rng) -> TrainWindow {
    if cfg.is_off() {
        return window.clone();
    }
    let p = AugmentParams::sample(cfg, window.intr.width == window.intr.height, rng);
    apply(window, &p)
}
