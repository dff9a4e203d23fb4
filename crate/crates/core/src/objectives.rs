//! Multi-level depth and semantic losses.
//!
//! Loss levels are numbered `l = 1 ..= M` from the coarsest decoder output
//! to the finest, and every slice of per-level values in this module is
//! ordered that way.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ops::{add, downsample_nearest};
use crate::net::{Real, Tape, Tensor, Var};

pub const DEFAULT_LOSS_WEIGHT: f64 = 0.15;

/// Weight of depth level `l` (1-based, coarsest first).
pub fn depth_level_weight(level: usize) -> f64 {
    2f64.powi(level as i32 + 1)
}

/// `weight / N_p * sum_i m_i |ln pred_i - ln gt_i|` over unmasked pixels.
/// `mask` holds 1 for counted pixels and 0 otherwise.
pub fn log_l1_op<T: Real>(tape: &mut Tape<T>, pred: Var, gt: &Tensor<T>, mask: Option<&Tensor<T>>, weight: f64) -> Result<Var> {
    let pv = tape.value(pred);
    if pv.dims() != gt.dims() || mask.is_some_and(|m| m.dims() != gt.dims()) {
        return Err(Error::Shape(format!(
            "prediction {:?} and ground truth {:?} differ",
            pv.dims(),
            gt.dims()
        )));
    }
    let ones;
    let mask = match mask {
        Some(m) => m,
        None => {
            ones = Tensor::full(gt.dims(), T::one());
            &ones
        }
    };
    let count = mask.sum().as_f64();
    let mut total = T::zero();
    let mut sign = Tensor::zeros(gt.dims());
    for (((&p, &g), &m), s) in pv.data().iter().zip(gt.data()).zip(mask.data()).zip(sign.data_mut()) {
        if m == T::zero() {
            continue;
        }
        if !(p > T::zero()) || !(g > T::zero()) {
            return Err(Error::Contract(format!("depths must be positive, found {p} and {g}")));
        }
        let d = p.ln() - g.ln();
        total += m * d.abs();
        *s = m * d.signum();
    }
    let scale = if count > 0.0 { T::of(weight / count) } else { T::zero() };
    let out = Tensor::scalar(total * scale);
    Ok(tape.op(out, &[pred], move |ctx| {
        let g = ctx.grad.data()[0] * scale;
        vec![Some(ctx.inputs[0].zip_map(&sign, |p, s| g * s / p))]
    }))
}

/// Mean softmax cross-entropy over pixels. `logits` is `[N, C, H, W]`,
/// `labels` holds `N * H * W` class indices.
pub fn softmax_ce_op<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[u8]) -> Result<Var> {
    let lv = tape.value(logits);
    let [n, c, h, w] = lv.dims();
    let plane = h * w;
    if labels.len() != n * plane {
        return Err(Error::Shape(format!("{} labels for {n}x{h}x{w} logits", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Contract(format!("class index {bad} outside [0, {c})")));
    }
    let mut probs = Tensor::zeros(lv.dims());
    let mut total = T::zero();
    for ni in 0..n {
        for p in 0..plane {
            let m = (0..c).map(|k| lv.channel(ni, k)[p]).fold(T::neg_infinity(), T::max);
            let z: T = (0..c).map(|k| (lv.channel(ni, k)[p] - m).exp()).sum();
            let target = labels[ni * plane + p] as usize;
            total += z.ln() + m - lv.channel(ni, target)[p];
            for k in 0..c {
                probs.channel_mut(ni, k)[p] = (lv.channel(ni, k)[p] - m).exp() / z;
            }
        }
    }
    let inv = T::one() / T::of((n * plane).max(1) as f64);
    let labels = labels.to_vec();
    Ok(tape.op(Tensor::scalar(total * inv), &[logits], move |ctx| {
        let g = ctx.grad.data()[0] * inv;
        let mut d = probs.clone();
        for ni in 0..n {
            for p in 0..plane {
                let t = labels[ni * plane + p] as usize;
                d.channel_mut(ni, t)[p] -= T::one();
            }
        }
        vec![Some(d.map(|v| v * g))]
    }))
}

/// Per-level depth losses on a tape; the result is the sum and the terms.
pub fn depth_loss_op<T: Real>(
    tape: &mut Tape<T>,
    preds: &[Var],
    gts: &[Tensor<T>],
    masks: Option<&[Tensor<T>]>,
) -> Result<(Var, Vec<Var>)> {
    if preds.is_empty() || preds.len() != gts.len() || masks.is_some_and(|m| m.len() != preds.len()) {
        return Err(Error::Contract("one ground-truth map per predicted level".into()));
    }
    let terms = preds
        .iter()
        .zip(gts)
        .enumerate()
        .map(|(i, (&p, g))| log_l1_op(tape, p, g, masks.map(|m| &m[i]), depth_level_weight(i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((sum_vars(tape, &terms), terms))
}

pub fn semantic_loss_op<T: Real>(tape: &mut Tape<T>, logits: &[Var], labels: &[Vec<u8>]) -> Result<(Var, Vec<Var>)> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::Contract("one label map per predicted level".into()));
    }
    let terms = logits
        .iter()
        .zip(labels)
        .map(|(&l, y)| softmax_ce_op(tape, l, y))
        .collect::<Result<Vec<_>>>()?;
    Ok((sum_vars(tape, &terms), terms))
}

fn sum_vars<T: Real>(tape: &mut Tape<T>, vars: &[Var]) -> Var {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = add(tape, acc, v);
    }
    acc
}

/// Nearest-neighbor downscaling: coarse pixel `i` reads fine pixel
/// `i * factor + factor / 2`.
pub fn downscale_nearest<A: Copy>(map: &Array2<A>, factor: usize) -> Array2<A> {
    let (h, w) = map.dim();
    let off = factor / 2;
    Array2::from_shape_fn((h / factor, w / factor), |(j, i)| map[[j * factor + off, i * factor + off]])
}

/// Integer factor between a fine and a coarse map.
fn level_factor(fine: (usize, usize), coarse: (usize, usize)) -> Result<usize> {
    let (fh, fw) = fine;
    let (ch, cw) = coarse;
    if ch == 0 || cw == 0 || fh % ch != 0 || fw % cw != 0 || fh / ch != fw / cw {
        return Err(Error::Shape(format!(
            "a {cw}x{ch} level is not an integer downscale of {fw}x{fh}"
        )));
    }
    Ok(fh / ch)
}

fn to_tensor(a: &Array2<f64>) -> Tensor<f64> {
    let (h, w) = a.dim();
    Tensor::from_vec([1, 1, h, w], a.iter().copied().collect())
}

/// Per-level values and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub per_level: Vec<f64>,
}

/// Whether ground-truth pixels at or beyond `max_depth` count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SkyHandling {
    Include,
    Exclude { max_depth: f64 },
}

impl Default for SkyHandling {
    fn default() -> Self {
        SkyHandling::Include
    }
}

/// Multi-level log-L1 depth loss. Predictions are ordered coarsest first;
/// the ground truth is downscaled to each level by nearest neighbor.
pub fn depth_loss(preds: &[Array2<f64>], gt: &Array2<f64>, sky: SkyHandling) -> Result<LossTerms> {
    let mut tape = Tape::<f64>::new();
    let mut vars = Vec::new();
    let mut gts = Vec::new();
    let mut masks = Vec::new();
    for p in preds {
        let g = downscale_nearest(gt, level_factor(gt.dim(), p.dim())?);
        let m = g.mapv(|v| match sky {
            SkyHandling::Exclude { max_depth } if v >= max_depth => 0.0,
            _ => 1.0,
        });
        vars.push(tape.constant(to_tensor(p)));
        gts.push(to_tensor(&g));
        masks.push(to_tensor(&m));
    }
    let (total, terms) = depth_loss_op(&mut tape, &vars, &gts, Some(&masks))?;
    Ok(LossTerms {
        total: tape.value(total).data()[0],
        per_level: terms.iter().map(|&t| tape.value(t).data()[0]).collect(),
    })
}

/// Multi-level cross-entropy. `logits[l]` is `[H_l, W_l, N_c]`, coarsest
/// first; labels are downscaled to each level by nearest neighbor.
pub fn semantic_loss(logits: &[ndarray::Array3<f64>], gt: &Array2<u8>) -> Result<LossTerms> {
    let mut tape = Tape::<f64>::new();
    let mut vars = Vec::new();
    let mut labels = Vec::new();
    for lg in logits {
        let (h, w, c) = lg.dim();
        let factor = level_factor(gt.dim(), (h, w))?;
        let t = Tensor::from_fn([1, c, h, w], |[_, k, j, i]| lg[[j, i, k]]);
        vars.push(tape.constant(t));
        labels.push(downscale_nearest(gt, factor).iter().copied().collect());
    }
    let (total, terms) = semantic_loss_op(&mut tape, &vars, &labels)?;
    Ok(LossTerms {
        total: tape.value(total).data()[0],
        per_level: terms.iter().map(|&t| tape.value(t).data()[0]).collect(),
    })
}

/// Ground truth for every loss level of a batch, coarsest first.
pub fn depth_targets<T: Real>(gt: &Tensor<T>, levels: usize, finest_factor: usize) -> Vec<Tensor<T>> {
    (0..levels)
        .rev()
        .map(|i| downsample_nearest(gt, finest_factor << i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth_loss: f64,
    pub semantic_loss: f64,
    pub total: f64,
    /// `(depth, semantic)` per level, coarsest first.
    pub per_level: Vec<(f64, f64)>,
    pub loss_weight: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "step,depth,semantic,total,w";

    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{}",
            self.depth_loss, self.semantic_loss, self.total, self.loss_weight
        )
    }
}

/// `total = depth + w * semantic`. Either side may be absent (single-task
/// networks), in which case it contributes zero.
pub fn joint_loss(depth: Option<&LossTerms>, semantic: Option<&LossTerms>, w: f64) -> LossBreakdown {
    let d = depth.map_or(0.0, |t| t.total);
    let s = semantic.map_or(0.0, |t| t.total);
    let levels = depth
        .map_or(0, |t| t.per_level.len())
        .max(semantic.map_or(0, |t| t.per_level.len()));
    let at = |t: Option<&LossTerms>, i: usize| t.and_then(|t| t.per_level.get(i).copied()).unwrap_or(0.0);
    LossBreakdown {
        depth_loss: d,
        semantic_loss: s,
        total: d + w * s,
        per_level: (0..levels).map(|i| (at(depth, i), at(semantic, i))).collect(),
        loss_weight: w,
    }
}
