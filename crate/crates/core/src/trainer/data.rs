use ndarray::Array2;

use super::augment::TrainWindow;
use super::batch::SequenceBatch;
use crate::classes::Class;
use crate::error::{Error, Result};
use crate::evalkit::median;
use crate::geometry::{parallax_from_depth_with, relative_transform, DepthMap};
use crate::net::{ArchConfig, Real, Tensor};
use crate::synthgen::Trajectory;

/// Start positions `(trajectory, first frame)` of every full window.
pub fn window_starts(trajs: &[Trajectory], len: usize) -> Vec<(usize, usize)> {
    trajs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..(t.frames.len() + 1).saturating_sub(len)).map(move |s| (k, s)))
        .collect()
}

pub fn load_window(trajs: &[Trajectory], (traj, start): (usize, usize), len: usize) -> Result<TrainWindow> {
    let frames = trajs
        .get(traj)
        .and_then(|t| t.frames.get(start..start + len))
        .ok_or_else(|| Error::Contract(format!("window {traj}:{start}+{len} is out of range")))?;
    TrainWindow::from_frames(frames)
}

/// Stacks equally long windows into a time-major batch.
pub fn collate<T: Real>(windows: &[TrainWindow]) -> Result<SequenceBatch<T>> {
    let first = windows.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
    let n = first.len();
    let (h, w) = (first.intr.height, first.intr.width);
    if windows.iter().any(|win| win.len() != n || win.intr.height != h || win.intr.width != w) {
        return Err(Error::Contract("windows of a batch must share length and size".into()));
    }
    let plane = h * w;
    let mut batch = SequenceBatch {
        frames: Vec::with_capacity(n),
        depth: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        motions: (1..n).map(|t| windows.iter().map(|win| win.motions[t - 1]).collect()).collect(),
        intrs: windows.iter().map(|win| win.intr).collect(),
    };
    for t in 0..n {
        let mut rgb = Vec::with_capacity(windows.len() * 3 * plane);
        let mut depth = Vec::with_capacity(windows.len() * plane);
        let mut labels = Vec::with_capacity(windows.len() * plane);
        for win in windows {
            for c in 0..3 {
                rgb.extend(win.rgb[t].index_axis(ndarray::Axis(2), c).iter().map(|&v| T::of(v as f64)));
            }
            depth.extend(win.depth[t].iter().map(|&v| T::of(v)));
            labels.extend(win.seg[t].iter().copied());
        }
        batch.frames.push(Tensor::from_vec([windows.len(), 3, h, w], rgb));
        batch.depth.push(Tensor::from_vec([windows.len(), 1, h, w], depth));
        batch.labels.push(labels);
    }
    Ok(batch)
}

/// Median ground-truth parallax over non-sky pixels of every consecutive
/// frame pair, expressed in pixels of the coarsest decoder level.
pub fn median_coarse_parallax(trajs: &[Trajectory], arch: &ArchConfig) -> Result<Option<f64>> {
    let mut values = Vec::new();
    for traj in trajs {
        for pair in traj.frames.windows(2) {
            let motion = relative_transform(&pair[0].pose, &pair[1].pose)?;
            let (rho, valid) = parallax_from_depth_with(&pair[1].depth, &motion, &pair[1].intrinsics, arch.denominator)?;
            for ((&r, &v), &c) in rho.values.iter().zip(valid.iter()).zip(pair[1].seg.iter()) {
                if v && c != Class::Sky as u8 && r > 0.0 {
                    values.push(r);
                }
            }
        }
    }
    Ok(median(&values).map(|m| m / (1u64 << arch.num_levels) as f64))
}

pub(crate) fn depth_map(values: Array2<f64>, max_depth: f64) -> Result<DepthMap> {
    DepthMap::new(values.mapv(|v| v.clamp(1e-6, max_depth)), max_depth)
}
