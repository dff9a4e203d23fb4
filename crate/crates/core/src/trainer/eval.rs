use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::fingerprint;
use super::data::depth_map;
use crate::error::{Error, Result};
use crate::evalkit::{
    median, ConfusionMatrix, DepthAccumulator, DepthMetrics, QualitativeSample, SegMetrics, DEPTH_CAP_FAR,
    DEPTH_CAP_NEAR,
};
use crate::geometry::{relative_transform, DepthMap, MotionTransform};
use crate::net::model::forward_sequence;
use crate::net::ops::upsample_nearest;
use crate::net::{ArchConfig, Checkpoint, ParamStore, StoredMetrics, Tape, Tensor};
use crate::classes::{Class, DEFAULT_PALETTE};
use crate::synthgen::{default_depth_scale, encode_depth, FrameSample, Trajectory};

/// Windows evaluated together in one forward pass.
const EVAL_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapProtocol {
    /// Depth capped at 80 m.
    Cap80,
    /// Depth capped at 200 m.
    Cap200,
}

impl CapProtocol {
    pub fn cap(self) -> f64 {
        match self {
            CapProtocol::Cap80 => DEPTH_CAP_NEAR,
            CapProtocol::Cap200 => DEPTH_CAP_FAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub frame: usize,
    pub depth: Option<DepthMap>,
    pub seg: Option<Array2<u8>>,
}

/// Predictions for every frame of a trajectory. Frame `t` is predicted from
/// the window of up to `sequence_length` frames ending at `t`; the first
/// frame has no predecessor and gets a semantic map only.
pub fn predict_trajectory(arch: &ArchConfig, params: &ParamStore<f32>, traj: &Trajectory) -> Result<Vec<FramePrediction>> {
    let frames = &traj.frames;
    let n = arch.sequence_length.max(1);
    let mut out: Vec<FramePrediction> = Vec::with_capacity(frames.len());
    let ends: Vec<usize> = (0..frames.len()).collect();
    // Group windows by length so each group runs as one batch.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &t in &ends {
        let len = (t + 1).min(n);
        match groups.iter_mut().find(|(l, g)| *l == len && g.len() < EVAL_CHUNK) {
            Some((_, g)) => g.push(t),
            None => groups.push((len, vec![t])),
        }
    }
    for (len, group) in groups {
        let windows: Vec<&[FrameSample]> = group.iter().map(|&t| &frames[t + 1 - len..=t]).collect();
        out.extend(predict_windows(arch, params, &windows)?);
    }
    out.sort_by_key(|p| p.frame);
    Ok(out)
}

/// Predictions for the last frame of each equally long window.
pub fn predict_windows(arch: &ArchConfig, params: &ParamStore<f32>, windows: &[&[FrameSample]]) -> Result<Vec<FramePrediction>> {
    let len = windows[0].len();
    let intrs: Vec<_> = windows.iter().map(|w| w[0].intrinsics).collect();
    let (h, w) = (intrs[0].height, intrs[0].width);
    arch.check_input(w, h)?;
    let mut tape = Tape::<f32>::new();
    let p = params.bind_frozen(&mut tape);
    let frames: Vec<_> = (0..len)
        .map(|t| {
            let mut data = Vec::with_capacity(windows.len() * 3 * h * w);
            for win in windows {
                for c in 0..3 {
                    data.extend(win[t].rgb.index_axis(ndarray::Axis(2), c).iter().map(|&v| v as f32 / 255.0));
                }
            }
            tape.constant(Tensor::from_vec([windows.len(), 3, h, w], data))
        })
        .collect();
    let motions = (1..len)
        .map(|t| windows.iter().map(|win| relative_transform(&win[t - 1].pose, &win[t].pose)).collect::<Result<Vec<MotionTransform>>>())
        .collect::<Result<Vec<_>>>()?;
    let outputs = forward_sequence(&mut tape, arch, &p, &frames, &motions, &intrs)?;
    let last = outputs.last().expect("forward yields outputs");
    let depth = (!last.depth.is_empty() && len > 1).then(|| upsample_nearest(tape.value(last.depth[0]), 2));
    let logits = (!last.seg_logits.is_empty()).then(|| upsample_nearest(tape.value(last.seg_logits[0]), 2));
    windows
        .iter()
        .enumerate()
        .map(|(k, win)| {
            let frame = win[len - 1].frame_index;
            let depth = match &depth {
                Some(d) => {
                    let c = d.channel(k, 0);
                    Some(depth_map(Array2::from_shape_fn((h, w), |(j, i)| c[j * w + i] as f64), arch.max_depth)?)
                }
                None => None,
            };
            let seg = logits.as_ref().map(|l| {
                Array2::from_shape_fn((h, w), |(j, i)| {
                    let mut best = 0;
                    for c in 1..arch.num_classes {
                        if l.at(k, c, j, i) > l.at(k, best, j, i) {
                            best = c;
                        }
                    }
                    best as u8
                })
            });
            Ok(FramePrediction { frame, depth, seg })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEval {
    pub id: String,
    pub depth: Option<DepthMetrics>,
    pub seg: Option<SegMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub depth: Option<DepthMetrics>,
    pub seg: Option<SegMetrics>,
    /// Median over frames of the per-frame AbsRel.
    pub median_abs_rel: Option<f64>,
    pub per_trajectory: Vec<TrajectoryEval>,
    /// Absolute errors of every evaluated pixel (capped maps).
    pub depth_abs_errors: Vec<f64>,
    pub qualitative: Vec<QualitativeSample>,
}

impl EvalOutcome {
    pub fn stored(&self) -> StoredMetrics {
        StoredMetrics {
            rmse: self.depth.map(|d| d.rmse),
            abs_rel: self.depth.map(|d| d.abs_rel),
            delta1: self.depth.map(|d| d.delta1),
            delta2: self.depth.map(|d| d.delta2),
            delta3: self.depth.map(|d| d.delta3),
            miou: self.seg.as_ref().map(|s| s.miou),
            pixel_accuracy: self.seg.as_ref().map(|s| s.pixel_accuracy),
            median_abs_rel: self.median_abs_rel,
        }
    }
}

/// Metrics over every frame of every trajectory. Depth is scored on frames
/// with a predecessor; `qualitative` frames are kept for plots.
pub fn evaluate_params(
    arch: &ArchConfig,
    params: &ParamStore<f32>,
    trajs: &[Trajectory],
    cap: f64,
    qualitative: usize,
) -> Result<EvalOutcome> {
    let mut depth_all = DepthAccumulator::default();
    let mut seg_all = ConfusionMatrix::new(arch.num_classes);
    let mut frame_abs_rel = Vec::new();
    let mut errors = Vec::new();
    let mut samples = Vec::new();
    let mut per_trajectory = Vec::new();
    for traj in trajs {
        let preds = predict_trajectory(arch, params, traj)?;
        let mut depth_t = DepthAccumulator::default();
        let mut seg_t = ConfusionMatrix::new(arch.num_classes);
        for (pred, gt) in preds.iter().zip(&traj.frames) {
            if let Some(d) = &pred.depth {
                depth_t.add(d, &gt.depth, cap)?;
                depth_all.add(d, &gt.depth, cap)?;
                let mut one = DepthAccumulator::default();
                one.add(d, &gt.depth, cap)?;
                frame_abs_rel.push(one.finish()?.abs_rel);
                errors.extend(d.values.iter().zip(gt.depth.values.iter()).map(|(p, g)| (p.min(cap) - g.min(cap)).abs()));
            }
            if let Some(s) = &pred.seg {
                seg_t.add(s, &gt.seg)?;
                seg_all.add(s, &gt.seg)?;
            }
            if samples.len() < qualitative && pred.depth.is_some() {
                samples.push(QualitativeSample {
                    rgb: gt.rgb.clone(),
                    gt_seg: gt.seg.clone(),
                    pred_seg: pred.seg.clone().unwrap_or_else(|| Array2::zeros(gt.seg.dim())),
                    gt_depth: gt.depth.values.clone(),
                    pred_depth: pred.depth.as_ref().map_or_else(|| gt.depth.values.clone(), |d| d.values.clone()),
                    max_depth: gt.depth.max_depth,
                });
            }
        }
        per_trajectory.push(TrajectoryEval {
            id: traj.id.clone(),
            depth: (depth_t.count() > 0).then(|| depth_t.finish()).transpose()?,
            seg: (seg_t.total() > 0).then(|| seg_t.metrics()),
        });
    }
    Ok(EvalOutcome {
        depth: (depth_all.count() > 0).then(|| depth_all.finish()).transpose()?,
        seg: (seg_all.total() > 0).then(|| seg_all.metrics()),
        median_abs_rel: median(&frame_abs_rel),
        per_trajectory,
        depth_abs_errors: errors,
        qualitative: samples,
    })
}

/// Evaluates a checkpoint after confirming it was produced by the
/// architecture it describes.
pub fn evaluate(ckpt: &Checkpoint, trajs: &[Trajectory], protocol: CapProtocol, qualitative: usize) -> Result<EvalOutcome> {
    let expected = fingerprint(&ckpt.arch);
    if ckpt.fingerprint != expected {
        return Err(Error::Fingerprint { expected, found: ckpt.fingerprint.clone() });
    }
    ckpt.params.check_against(&ckpt.arch)?;
    evaluate_params(&ckpt.arch, &ckpt.params, trajs, protocol.cap(), qualitative)
}

/// Writes the predicted maps of one frame as PNGs: `<stem>_depth.png`
/// (16-bit, dataset depth coding), `<stem>_seg.png` (class indices) and
/// `<stem>_seg_color.png` (default palette). Returns the written paths.
pub fn save_prediction(dir: &Path, stem: &str, pred: &FramePrediction, max_depth: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let Some(depth) = &pred.depth {
        let (h, w) = depth.dim();
        let seg = pred.seg.clone().unwrap_or_else(|| Array2::from_elem((h, w), Class::Land as u8));
        let codes = encode_depth(depth, &seg, default_depth_scale(max_depth));
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w as u32, h as u32, codes.iter().copied().collect()).expect("depth buffer size");
        let path = dir.join(format!("{stem}_depth.png"));
        img.save(&path)?;
        written.push(path);
    }
    if let Some(seg) = &pred.seg {
        let (h, w) = seg.dim();
        let img: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w as u32, h as u32, seg.iter().copied().collect()).expect("seg buffer size");
        let path = dir.join(format!("{stem}_seg.png"));
        img.save(&path)?;
        written.push(path);
        let color: Vec<u8> = seg
            .iter()
            .flat_map(|&c| DEFAULT_PALETTE.get(c as usize).copied().unwrap_or([255, 255, 255]))
            .collect();
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w as u32, h as u32, color).expect("color buffer size");
        let path = dir.join(format!("{stem}_seg_color.png"));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
