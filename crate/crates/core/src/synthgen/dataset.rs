use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use nalgebra::{Quaternion, Vector3};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::classes::{Class, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Pose};

pub const POSES_HEADER: [&str; 8] = ["frame", "x", "y", "z", "qw", "qx", "qy", "qz"];
const DEPTH_CODE_MAX: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    /// `H x W x 3`.
    pub rgb: Array3<u8>,
    pub depth: DepthMap,
    pub seg: Array2<u8>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub frame_index: usize,
}

impl FrameSample {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.intrinsics.height, self.intrinsics.width);
        if self.rgb.dim() != (h, w, 3) || self.depth.dim() != (h, w) || self.seg.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "frame {}: maps do not match the {w}x{h} intrinsics",
                self.frame_index
            )));
        }
        if let Some(&bad) = self.seg.iter().find(|&&c| c as usize >= NUM_CLASSES) {
            return Err(Error::Contract(format!("frame {}: class index {bad} out of range", self.frame_index)));
        }
        let sky = Class::Sky as u8;
        if self.seg.iter().zip(self.depth.values.iter()).any(|(&c, &d)| (c == sky) != (d == self.depth.max_depth)) {
            return Err(Error::Contract(format!("frame {}: sky and max depth disagree", self.frame_index)));
        }
        self.pose.validate()
    }
}

/// One recorded flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub frames: Vec<FrameSample>,
    pub frame_rate: f64,
    pub seed: u64,
    pub class_palette: [[u8; 3]; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub intrinsics: CameraIntrinsics,
    /// Meters per depth code.
    pub depth_scale: f64,
    pub max_depth: f64,
    pub class_palette: [[u8; 3]; NUM_CLASSES],
    pub frame_rate: f64,
    pub seed: u64,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub trajectories: Vec<(String, usize)>,
}

pub fn default_depth_scale(max_depth: f64) -> f64 {
    max_depth / DEPTH_CODE_MAX as f64
}

/// Depth codes: sky is the top code, other depths round to the nearest code
/// kept within `1 ..= top - 1` so the sky coupling survives the round trip.
pub fn encode_depth(depth: &DepthMap, seg: &Array2<u8>, scale: f64) -> Array2<u16> {
    let sky = Class::Sky as u8;
    ndarray::Zip::from(&depth.values).and(seg).map_collect(|&d, &c| {
        if c == sky {
            DEPTH_CODE_MAX
        } else {
            (d / scale).round().clamp(1.0, (DEPTH_CODE_MAX - 1) as f64) as u16
        }
    })
}

pub fn decode_depth(codes: &Array2<u16>, scale: f64, max_depth: f64) -> Result<DepthMap> {
    DepthMap::new(
        codes.mapv(|v| if v == DEPTH_CODE_MAX { max_depth } else { v as f64 * scale }),
        max_depth,
    )
}

fn frame_name(k: usize) -> String {
    format!("{k:06}.png")
}

fn trajectory_dir(root: &Path, id: &str) -> PathBuf {
    root.join(format!("trajectory_{id}"))
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    frame: usize,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

/// Writes one trajectory directory and returns its path.
pub fn write_trajectory(root: &Path, traj: &Trajectory) -> Result<PathBuf> {
    let first = traj
        .frames
        .first()
        .ok_or_else(|| Error::Contract(format!("trajectory {} has no frames", traj.id)))?;
    let intr = first.intrinsics;
    let max_depth = first.depth.max_depth;
    for f in &traj.frames {
        f.validate()?;
        if f.intrinsics != intr || f.depth.max_depth != max_depth {
            return Err(Error::Contract(format!(
                "trajectory {}: frame {} differs in camera or max depth",
                traj.id, f.frame_index
            )));
        }
    }
    let dir = trajectory_dir(root, &traj.id);
    for sub in ["rgb", "depth", "seg"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let scale = default_depth_scale(max_depth);
    let (w, h) = (intr.width as u32, intr.height as u32);
    let mut poses = csv::Writer::from_path(dir.join("poses.csv"))?;
    for f in &traj.frames {
        let name = frame_name(f.frame_index);
        let rgb: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w, h, f.rgb.iter().copied().collect()).expect("rgb buffer size");
        rgb.save(dir.join("rgb").join(&name))?;
        let codes = encode_depth(&f.depth, &f.seg, scale);
        let depth: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w, h, codes.iter().copied().collect()).expect("depth buffer size");
        depth.save(dir.join("depth").join(&name))?;
        let seg: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w, h, f.seg.iter().copied().collect()).expect("seg buffer size");
        seg.save(dir.join("seg").join(&name))?;
        let q = f.pose.orientation;
        poses.serialize(PoseRow {
            frame: f.frame_index,
            x: f.pose.position.x,
            y: f.pose.position.y,
            z: f.pose.position.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
        })?;
    }
    poses.flush()?;
    let meta = TrajectoryMeta {
        intrinsics: intr,
        depth_scale: scale,
        max_depth,
        class_palette: traj.class_palette,
        frame_rate: traj.frame_rate,
        seed: traj.seed,
        frame_count: traj.frames.len(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(dir)
}

pub fn write_dataset(root: &Path, trajectories: &[Trajectory]) -> Result<DatasetManifest> {
    fs::create_dir_all(root)?;
    let mut manifest = DatasetManifest { root: root.to_path_buf(), trajectories: Vec::new() };
    for t in trajectories {
        write_trajectory(root, t)?;
        manifest.trajectories.push((t.id.clone(), t.frames.len()));
    }
    Ok(manifest)
}

fn dataset_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Dataset { path: path.to_path_buf(), reason: reason.into() }
}

fn frame_error(frame: usize, path: &Path, reason: impl ToString) -> Error {
    Error::FrameLoad { frame, path: path.to_path_buf(), reason: reason.to_string() }
}

fn load_image(frame: usize, path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| frame_error(frame, path, e))
}

fn check_size(frame: usize, path: &Path, img: &image::DynamicImage, intr: &CameraIntrinsics) -> Result<()> {
    if img.width() as usize != intr.width || img.height() as usize != intr.height {
        return Err(frame_error(
            frame,
            path,
            format!("image is {}x{}, expected {}x{}", img.width(), img.height(), intr.width, intr.height),
        ));
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<TrajectoryMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| dataset_error(&path, e.to_string()))?;
    let meta: TrajectoryMeta = serde_json::from_str(&text).map_err(|e| dataset_error(&path, e.to_string()))?;
    meta.intrinsics.validate()?;
    Ok(meta)
}

/// Reads the pose rows of a trajectory directory.
pub fn read_poses(dir: &Path) -> Result<Vec<(usize, Pose)>> {
    let path = dir.join("poses.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| dataset_error(&path, e.to_string()))?;
    let header = reader.headers().map_err(|e| dataset_error(&path, e.to_string()))?;
    if header.iter().ne(POSES_HEADER) {
        return Err(dataset_error(&path, format!("unexpected header {header:?}")));
    }
    reader
        .deserialize::<PoseRow>()
        .map(|row| {
            let r = row.map_err(|e| dataset_error(&path, e.to_string()))?;
            let pose = Pose::new(Vector3::new(r.x, r.y, r.z), Quaternion::new(r.qw, r.qx, r.qy, r.qz))
                .map_err(|e| frame_error(r.frame, &path, e))?;
            Ok((r.frame, pose))
        })
        .collect()
}

pub fn read_frame(dir: &Path, meta: &TrajectoryMeta, frame: usize, pose: Pose) -> Result<FrameSample> {
    let intr = meta.intrinsics;
    let (h, w) = (intr.height, intr.width);
    let name = frame_name(frame);

    let path = dir.join("rgb").join(&name);
    let img = load_image(frame, &path)?;
    check_size(frame, &path, &img, &intr)?;
    let rgb = Array3::from_shape_vec((h, w, 3), img.into_rgb8().into_raw()).expect("rgb size checked");

    let path = dir.join("seg").join(&name);
    let img = load_image(frame, &path)?;
    check_size(frame, &path, &img, &intr)?;
    let seg = Array2::from_shape_vec((h, w), img.into_luma8().into_raw()).expect("seg size checked");
    if seg.iter().any(|&c| c as usize >= NUM_CLASSES) {
        return Err(frame_error(frame, &path, "class index out of range"));
    }

    let path = dir.join("depth").join(&name);
    let img = load_image(frame, &path)?;
    check_size(frame, &path, &img, &intr)?;
    if !matches!(img, image::DynamicImage::ImageLuma16(_)) {
        return Err(frame_error(frame, &path, "depth must be 16-bit grayscale"));
    }
    let codes = Array2::from_shape_vec((h, w), img.into_luma16().into_raw()).expect("depth size checked");
    let depth = decode_depth(&codes, meta.depth_scale, meta.max_depth).map_err(|e| frame_error(frame, &path, e))?;

    let sample = FrameSample { rgb, depth, seg, pose, intrinsics: intr, frame_index: frame };
    sample.validate().map_err(|e| frame_error(frame, dir, e))?;
    Ok(sample)
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let meta = read_meta(dir)?;
    let poses = read_poses(dir)?;
    if poses.len() != meta.frame_count {
        return Err(dataset_error(
            dir,
            format!("{} pose rows for {} frames", poses.len(), meta.frame_count),
        ));
    }
    let frames = poses
        .into_iter()
        .map(|(k, pose)| read_frame(dir, &meta, k, pose))
        .collect::<Result<Vec<_>>>()?;
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("trajectory_"))
        .ok_or_else(|| dataset_error(dir, "directory name must be trajectory_<id>"))?
        .to_string();
    Ok(Trajectory { id, frames, frame_rate: meta.frame_rate, seed: meta.seed, class_palette: meta.class_palette })
}

/// Trajectory directories under `root`, sorted by name.
pub fn trajectory_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| dataset_error(root, e.to_string()))?;
    let mut dirs = Vec::new();
    for e in entries {
        let path = e?.path();
        let is_traj = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trajectory_"));
        if is_traj && path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(dataset_error(root, "no trajectory_<id> directories"));
    }
    Ok(dirs)
}

pub fn read_dataset(root: &Path) -> Result<Vec<Trajectory>> {
    trajectory_dirs(root)?.iter().map(|d| read_trajectory(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_trajectory(seed: u64, frames: usize, w: usize, h: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let intr = CameraIntrinsics::from_fov(w, h, 90.0).unwrap();
        let frames = (0..frames)
            .map(|k| {
                let seg = Array2::from_shape_fn((h, w), |_| rng.random_range(0..9u8));
                let depth = DepthMap::new(
                    seg.mapv(|c| if c == 0 { 200.0 } else { 0.5 + 150.0 * (c as f64 / 9.0) }),
                    200.0,
                )
                .unwrap();
                let rgb = Array3::from_shape_fn((h, w, 3), |_| rng.random());
                let pose = Pose::new(
                    Vector3::new(rng.random(), rng.random(), 40.0 + rng.random::<f64>()),
                    Quaternion::new(rng.random(), rng.random(), rng.random(), rng.random::<f64>() + 0.1).normalize(),
                )
                .unwrap();
                FrameSample { rgb, depth, seg, pose, intrinsics: intr, frame_index: k }
            })
            .collect();
        Trajectory { id: format!("{seed:03}"), frames, frame_rate: 20.0, seed, class_palette: crate::classes::DEFAULT_PALETTE }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = random_trajectory(1, 5, 12, 8);
        let manifest = write_dataset(dir.path(), std::slice::from_ref(&traj)).unwrap();
        assert_eq!(manifest.trajectories, vec![("001".to_string(), 5)]);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        let scale = default_depth_scale(200.0);
        for (a, b) in traj.frames.iter().zip(&back[0].frames) {
            assert_eq!(a.rgb, b.rgb);
            assert_eq!(a.seg, b.seg);
            assert_eq!(a.pose, b.pose);
            assert_eq!(a.intrinsics, b.intrinsics);
            for (x, y) in a.depth.values.iter().zip(b.depth.values.iter()) {
                assert!((x - y).abs() <= scale / 2.0);
            }
        }
        let rows = read_poses(&trajectory_dir(dir.path(), "001")).unwrap();
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn quantization_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scale = default_depth_scale(200.0);
        for _ in 0..50 {
            let values = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.1..200.0 - scale));
            let depth = DepthMap::new(values, 200.0).unwrap();
            let seg = Array2::from_elem((16, 16), 3u8);
            let back = decode_depth(&encode_depth(&depth, &seg, scale), scale, 200.0).unwrap();
            let err = (&back.values - &depth.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= scale / 2.0, "error {err}");
        }
    }

    #[test]
    fn missing_frame_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let traj = random_trajectory(2, 3, 6, 4);
        let path = write_trajectory(dir.path(), &traj).unwrap();
        fs::remove_file(path.join("seg").join(frame_name(1))).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::FrameLoad { frame, .. }) => assert_eq!(frame, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_depth_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let traj = random_trajectory(3, 2, 6, 4);
        let path = write_trajectory(dir.path(), &traj).unwrap();
        fs::write(path.join("depth").join(frame_name(0)), b"not a png").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::FrameLoad { frame: 0, .. })));
    }
}
