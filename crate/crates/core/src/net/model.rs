//! Encoder, depth decoder, semantic decoder and their assembly over a
//! frame sequence.

use ndarray::{Array2, Array3};

use super::config::{ArchConfig, PARALLAX_FEATURES, SEMANTIC_FEATURES};
use super::cost::{dinl_op, sncv_op, split_normalize_op};
use super::geo_ops::{
    bilinear_sample_op, depth_from_parallax_op, depth_into_current_op, parallax_from_depth_op,
    pscv_op, reproject_op, LevelGeometry,
};
use super::ops::{
    concat, conv2d, exp, leaky_relu, ln_offset, mul, narrow, scale, upsample2, upsample_nearest,
};
use super::params::{BoundParams, ParamStore};
use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, MotionTransform};

/// Offset inside the logarithm of parallax inputs to the refiner.
pub const LOG_PARALLAX_OFFSET: f64 = 1e-3;

fn conv_layer<T: Real>(tape: &mut Tape<T>, p: &BoundParams, name: &str, x: Var, stride: usize) -> Var {
    conv2d(
        tape,
        x,
        p.get(&format!("{name}.weight")),
        p.get(&format!("{name}.bias")),
        stride,
    )
}

/// Applies `name.refine1 ..` with leaky activations between layers and a
/// linear output.
fn refiner<T: Real>(tape: &mut Tape<T>, cfg: &ArchConfig, p: &BoundParams, prefix: &str, layers: usize, x: Var) -> Var {
    let mut h = x;
    for i in 1..=layers {
        h = conv_layer(tape, p, &format!("{prefix}.refine{i}"), h, 1);
        if i < layers {
            h = leaky_relu(tape, h, cfg.leaky_slope);
        }
    }
    h
}

/// Feature pyramid of a batch of frames `[N, 3, H, W]`; entry `l - 1`
/// holds level `l` at `1 / 2^l` resolution.
pub fn encoder_forward<T: Real>(tape: &mut Tape<T>, cfg: &ArchConfig, p: &BoundParams, frame: Var) -> Result<Vec<Var>> {
    let [_, c, h, w] = tape.value(frame).dims();
    if c != 3 {
        return Err(Error::Shape(format!("frames need 3 channels, found {c}")));
    }
    cfg.check_input(w, h)?;
    let mut levels = Vec::with_capacity(cfg.num_levels);
    let mut x = frame;
    for l in 1..=cfg.num_levels {
        x = conv_layer(tape, p, &format!("encoder.l{l}.conv1"), x, 2);
        x = leaky_relu(tape, x, cfg.leaky_slope);
        if l == 1 {
            x = dinl_op(tape, x);
        }
        x = conv_layer(tape, p, &format!("encoder.l{l}.conv2"), x, 1);
        x = leaky_relu(tape, x, cfg.leaky_slope);
        levels.push(x);
    }
    Ok(levels)
}

/// Per-level outputs of one depth-decoder step, finest level first.
#[derive(Debug, Clone)]
pub struct DepthStep {
    pub parallax: Vec<Var>,
    pub depth: Vec<Var>,
}

/// One time step of the depth decoder. `state` is the previous step's
/// per-level depth (in the previous frame); `None` is the cold start.
pub fn depth_decoder_step<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ArchConfig,
    p: &BoundParams,
    pyr_t: &[Var],
    pyr_prev: &[Var],
    state: Option<&[Var]>,
    geos: &[LevelGeometry],
) -> Result<DepthStep> {
    let levels = cfg.num_levels;
    if pyr_t.len() != levels || pyr_prev.len() != levels || geos.len() != levels {
        return Err(Error::Contract(format!("depth decoder needs {levels} pyramid levels")));
    }
    if state.is_some_and(|s| s.len() != levels) {
        return Err(Error::Contract(format!("decoder state needs {levels} levels")));
    }
    let mut parallax = vec![None; levels];
    let mut depth = vec![None; levels];
    let mut upper: Option<(Var, Var)> = None;
    for l in (1..=levels).rev() {
        let li = l - 1;
        let geo = &geos[li];
        let k = cfg.split_k_per_level[li];
        let a_t = split_normalize_op(tape, pyr_t[li], k)?;
        let a_prev = split_normalize_op(tape, pyr_prev[li], k)?;
        let spatial = sncv_op(tape, a_t, cfg.sncv_radius);

        let up = upper.map(|(rho, feat)| {
            let r = upsample2(tape, rho);
            let r = scale(tape, r, 2.0);
            (r, upsample2(tape, feat))
        });

        // Recompute layer: the previous depth, carried into this frame.
        let dims = tape.value(a_t).dims();
        let prior = match state {
            None => tape.constant(Tensor::zeros([dims[0], 1, dims[2], dims[3]])),
            Some(s) => {
                let d_prev = s[li];
                let z_est = match up {
                    Some((r, _)) => depth_from_parallax_op(tape, r, geo),
                    None => d_prev,
                };
                let q = reproject_op(tape, z_est, geo);
                let z_src = bilinear_sample_op(tape, d_prev, q);
                let z_cur = depth_into_current_op(tape, z_src, q, geo);
                parallax_from_depth_op(tape, z_cur, geo)
            }
        };
        let estimate = up.map_or(prior, |(r, _)| r);
        let sweep = pscv_op(tape, a_t, a_prev, estimate, geo, cfg.pscv_candidates, cfg.pscv_step);
        let log_est = ln_offset(tape, estimate, LOG_PARALLAX_OFFSET);
        let log_prior = ln_offset(tape, prior, LOG_PARALLAX_OFFSET);
        let mut inputs = vec![a_t, spatial, sweep, log_est, log_prior];
        if let Some((_, feat)) = up {
            inputs.push(feat);
        }
        let x = concat(tape, &inputs);
        let out = refiner(tape, cfg, p, &format!("depth.l{l}"), cfg.depth_refiner_widths.len() + 1, x);
        let s = narrow(tape, out, 0, 1);
        let feat = narrow(tape, out, 1, PARALLAX_FEATURES);
        let gain = exp(tape, s);
        let rho = match up {
            Some((r, _)) => mul(tape, r, gain),
            None => gain,
        };
        depth[li] = Some(depth_from_parallax_op(tape, rho, geo));
        parallax[li] = Some(rho);
        upper = Some((rho, feat));
    }
    Ok(DepthStep {
        parallax: parallax.into_iter().map(|v| v.expect("every level visited")).collect(),
        depth: depth.into_iter().map(|v| v.expect("every level visited")).collect(),
    })
}

/// Per-level segmentation logits, finest level first.
pub fn semantic_decoder_forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ArchConfig,
    p: &BoundParams,
    pyr_t: &[Var],
) -> Result<Vec<Var>> {
    let levels = cfg.num_levels;
    if pyr_t.len() != levels {
        return Err(Error::Contract(format!("semantic decoder needs {levels} pyramid levels")));
    }
    let mut logits = vec![None; levels];
    let mut upper: Option<(Var, Var)> = None;
    for l in (1..=levels).rev() {
        let li = l - 1;
        let a = split_normalize_op(tape, pyr_t[li], cfg.split_k_per_level[li])?;
        let mut inputs = vec![a];
        if let Some((lg, feat)) = upper {
            inputs.push(upsample2(tape, lg));
            inputs.push(upsample2(tape, feat));
        }
        let x = concat(tape, &inputs);
        let out = refiner(tape, cfg, p, &format!("semantic.l{l}"), cfg.semantic_refiner_layers, x);
        let feat = narrow(tape, out, 0, SEMANTIC_FEATURES);
        let lg = narrow(tape, out, SEMANTIC_FEATURES, cfg.num_classes);
        logits[li] = Some(lg);
        upper = Some((lg, feat));
    }
    Ok(logits.into_iter().map(|v| v.expect("every level visited")).collect())
}

/// Outputs for one frame of a sequence. Depth fields are empty for the
/// depth-less task and for a frame without predecessor.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: usize,
    pub parallax: Vec<Var>,
    pub depth: Vec<Var>,
    pub seg_logits: Vec<Var>,
}

/// Per-level geometry of one time step for every batch item.
pub fn level_geometries(cfg: &ArchConfig, motions: &[MotionTransform], intrs: &[CameraIntrinsics]) -> Vec<LevelGeometry> {
    (1..=cfg.num_levels)
        .map(|l| {
            let scaled: Vec<_> = intrs.iter().map(|k| k.downscaled(1 << l)).collect();
            LevelGeometry::new(motions, &scaled, cfg.max_depth, cfg.denominator)
        })
        .collect()
}

/// Runs a batch of `n` frames. `motions[t - 1][item]` maps frame `t`
/// coordinates into frame `t - 1`. The encoder runs once per frame; the
/// decoders produce outputs for every frame with a predecessor (or the
/// single frame when `n = 1`), carrying the parallax state forward.
pub fn forward_sequence<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ArchConfig,
    p: &BoundParams,
    frames: &[Var],
    motions: &[Vec<MotionTransform>],
    intrs: &[CameraIntrinsics],
) -> Result<Vec<FrameOutput>> {
    if frames.is_empty() {
        return Err(Error::Contract("empty frame sequence".into()));
    }
    if motions.len() + 1 != frames.len() {
        return Err(Error::Contract(format!(
            "{} frames need {} motions, got {}",
            frames.len(),
            frames.len() - 1,
            motions.len()
        )));
    }
    let batch = tape.value(frames[0]).n();
    if intrs.len() != batch || motions.iter().any(|m| m.len() != batch) {
        return Err(Error::Contract(format!("every step needs {batch} cameras and motions")));
    }
    for m in motions.iter().flatten() {
        m.validate()?;
    }
    let pyramids = frames
        .iter()
        .map(|&f| encoder_forward(tape, cfg, p, f))
        .collect::<Result<Vec<_>>>()?;
    let first = if frames.len() == 1 { 0 } else { 1 };
    let mut outputs = Vec::new();
    let mut state: Option<Vec<Var>> = None;
    for t in first..frames.len() {
        let (parallax, depth) = if cfg.task.has_depth() && t > 0 {
            let geos = level_geometries(cfg, &motions[t - 1], intrs);
            let step = depth_decoder_step(tape, cfg, p, &pyramids[t], &pyramids[t - 1], state.as_deref(), &geos)?;
            state = Some(step.depth.clone());
            (step.parallax, step.depth)
        } else {
            (Vec::new(), Vec::new())
        };
        let seg_logits = if cfg.task.has_semantic() {
            semantic_decoder_forward(tape, cfg, p, &pyramids[t])?
        } else {
            Vec::new()
        };
        outputs.push(FrameOutput { frame: t, parallax, depth, seg_logits });
    }
    Ok(outputs)
}

/// Final prediction for the last frame of a sequence, at input resolution.
#[derive(Debug, Clone)]
pub struct JointOutput {
    pub depth: Option<DepthMap>,
    /// `[H, W, N_c]`.
    pub seg_logits: Option<Array3<f64>>,
    pub seg_probs: Option<Array3<f64>>,
    /// Per-level maps at their own resolution, finest level first.
    pub parallax_levels: Vec<Array2<f64>>,
    pub seg_levels: Vec<Array3<f64>>,
}

impl JointOutput {
    pub fn seg_classes(&self) -> Option<Array2<u8>> {
        self.seg_probs.as_ref().map(|probs| {
            let (h, w, c) = probs.dim();
            Array2::from_shape_fn((h, w), |(j, i)| {
                let mut best = 0;
                for k in 1..c {
                    if probs[[j, i, k]] > probs[[j, i, best]] {
                        best = k;
                    }
                }
                best as u8
            })
        })
    }
}

fn to_array2<T: Real>(t: &Tensor<T>) -> Array2<f64> {
    let [_, _, h, w] = t.dims();
    let c = t.channel(0, 0);
    Array2::from_shape_fn((h, w), |(j, i)| c[j * w + i].as_f64())
}

/// `[1, C, H, W]` to `[H, W, C]`.
fn to_array3<T: Real>(t: &Tensor<T>) -> Array3<f64> {
    let [_, c, h, w] = t.dims();
    Array3::from_shape_fn((h, w, c), |(j, i, k)| t.at(0, k, j, i).as_f64())
}

/// Channel-wise softmax of `[H, W, C]` scores.
pub fn softmax_channels(logits: &Array3<f64>) -> Array3<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    probs
}

/// Inference on one sequence (batch of one). Frames are `[1, 3, H, W]`.
pub fn cosemdepth_forward<T: Real>(
    cfg: &ArchConfig,
    params: &ParamStore<T>,
    frames: &[Tensor<T>],
    motions: &[MotionTransform],
    intr: &CameraIntrinsics,
) -> Result<JointOutput> {
    if frames.is_empty() || motions.len() + 1 != frames.len() {
        return Err(Error::Contract(format!(
            "{} frames need {} motions, got {}",
            frames.len(),
            frames.len().saturating_sub(1),
            motions.len()
        )));
    }
    if frames.iter().any(|f| f.n() != 1) {
        return Err(Error::Contract("inference takes one item per frame".into()));
    }
    let mut tape = Tape::new();
    let p = params.bind_frozen(&mut tape);
    let vars: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
    let steps: Vec<Vec<MotionTransform>> = motions.iter().map(|m| vec![*m]).collect();
    let outputs = forward_sequence(&mut tape, cfg, &p, &vars, &steps, &[*intr])?;
    let last = outputs.last().expect("at least one output");
    let has_depth = !last.depth.is_empty() && last.frame + 1 == frames.len() && frames.len() > 1;
    let depth = if has_depth {
        let fine = upsample_nearest(tape.value(last.depth[0]), 2);
        Some(DepthMap::new(to_array2(&fine), cfg.max_depth)?)
    } else {
        None
    };
    let (seg_logits, seg_probs) = if last.seg_logits.is_empty() {
        (None, None)
    } else {
        let logits = to_array3(&upsample_nearest(tape.value(last.seg_logits[0]), 2));
        let probs = softmax_channels(&logits);
        (Some(logits), Some(probs))
    };
    Ok(JointOutput {
        depth,
        seg_logits,
        seg_probs,
        parallax_levels: last.parallax.iter().map(|&v| to_array2(tape.value(v))).collect(),
        seg_levels: last.seg_logits.iter().map(|&v| to_array3(tape.value(v))).collect(),
    })
}
