use super::super::objectives::{
    depth_loss_op, depth_targets, joint_loss, semantic_loss_op, LossBreakdown, LossTerms, SkyHandling,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, MotionTransform};
use crate::net::model::forward_sequence;
use crate::net::ops::{add, scale};
use crate::net::params::BoundParams;
use crate::net::{ArchConfig, Real, Tape, Tensor, Var};

/// A batch of equally long frame windows, time-major.
#[derive(Debug, Clone)]
pub struct SequenceBatch<T> {
    /// `frames[t]` is `[N, 3, H, W]` with values in `[0, 1]`.
    pub frames: Vec<Tensor<T>>,
    /// `depth[t]` is `[N, 1, H, W]` in meters.
    pub depth: Vec<Tensor<T>>,
    /// `labels[t]` holds `N * H * W` class indices.
    pub labels: Vec<Vec<u8>>,
    /// `motions[t - 1][item]` maps frame `t` coordinates into frame `t - 1`.
    pub motions: Vec<Vec<MotionTransform>>,
    pub intrs: Vec<CameraIntrinsics>,
}

impl<T: Real> SequenceBatch<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.frames.first().map_or(0, Tensor::n)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.depth.len() != n || self.labels.len() != n || self.motions.len() + 1 != n {
            return Err(Error::Contract("inconsistent sequence batch lengths".into()));
        }
        let [b, c, h, w] = self.frames[0].dims();
        if c != 3 || self.intrs.len() != b {
            return Err(Error::Contract("frames need 3 channels and one camera per item".into()));
        }
        for t in 0..n {
            if self.frames[t].dims() != [b, 3, h, w]
                || self.depth[t].dims() != [b, 1, h, w]
                || self.labels[t].len() != b * h * w
            {
                return Err(Error::Contract(format!("frame {t} of the batch has inconsistent shapes")));
            }
        }
        if self.motions.iter().any(|m| m.len() != b) {
            return Err(Error::Contract("one motion per item and step".into()));
        }
        Ok(())
    }
}

/// Nearest-neighbor downscaling of `[N, H, W]` labels.
pub fn downscale_labels(labels: &[u8], n: usize, h: usize, w: usize, factor: usize) -> Vec<u8> {
    let (ho, wo) = (h / factor, w / factor);
    let off = factor / 2;
    let mut out = Vec::with_capacity(n * ho * wo);
    for ni in 0..n {
        for j in 0..ho {
            for i in 0..wo {
                out.push(labels[ni * h * w + (j * factor + off) * w + i * factor + off]);
            }
        }
    }
    out
}

/// Joint loss of a batch, averaged over every frame that has decoder
/// outputs. Returns the differentiable total and its breakdown.
pub fn window_loss<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ArchConfig,
    params: &BoundParams,
    batch: &SequenceBatch<T>,
    loss_weight: f64,
    sky: SkyHandling,
) -> Result<(Var, LossBreakdown)> {
    batch.validate()?;
    let frames: Vec<Var> = batch.frames.iter().map(|f| tape.constant(f.clone())).collect();
    let outputs = forward_sequence(tape, cfg, params, &frames, &batch.motions, &batch.intrs)?;
    let [b, _, h, w] = batch.frames[0].dims();
    let levels = cfg.num_levels;
    let mut total: Option<Var> = None;
    let mut breakdowns = Vec::new();
    for out in &outputs {
        let t = out.frame;
        let mut step_total: Option<Var> = None;
        let mut depth_terms = None;
        let mut sem_terms = None;
        if !out.depth.is_empty() {
            let preds: Vec<Var> = out.depth.iter().rev().copied().collect();
            let gts = depth_targets(&batch.depth[t], levels, 2);
            let masks: Option<Vec<Tensor<T>>> = match sky {
                SkyHandling::Include => None,
                SkyHandling::Exclude { max_depth } => Some(
                    gts.iter()
                        .map(|g| g.map(|v| if v.as_f64() >= max_depth { T::zero() } else { T::one() }))
                        .collect(),
                ),
            };
            let (d, terms) = depth_loss_op(tape, &preds, &gts, masks.as_deref())?;
            depth_terms = Some(read_terms(tape, d, &terms));
            step_total = Some(d);
        }
        if !out.seg_logits.is_empty() {
            let logits: Vec<Var> = out.seg_logits.iter().rev().copied().collect();
            let labels: Vec<Vec<u8>> = (0..levels)
                .rev()
                .map(|i| downscale_labels(&batch.labels[t], b, h, w, 2 << i))
                .collect();
            let (s, terms) = semantic_loss_op(tape, &logits, &labels)?;
            sem_terms = Some(read_terms(tape, s, &terms));
            let ws = scale(tape, s, loss_weight);
            step_total = Some(match step_total {
                Some(d) => add(tape, d, ws),
                None => ws,
            });
        }
        let step_total = step_total.ok_or_else(|| Error::Contract("network produced no outputs".into()))?;
        breakdowns.push(joint_loss(depth_terms.as_ref(), sem_terms.as_ref(), loss_weight));
        total = Some(match total {
            Some(acc) => add(tape, acc, step_total),
            None => step_total,
        });
    }
    let k = breakdowns.len() as f64;
    let total = scale(tape, total.expect("at least one output"), 1.0 / k);
    Ok((total, average(&breakdowns, loss_weight)))
}

fn read_terms<T: Real>(tape: &Tape<T>, total: Var, terms: &[Var]) -> LossTerms {
    LossTerms {
        total: tape.value(total).data()[0].as_f64(),
        per_level: terms.iter().map(|&v| tape.value(v).data()[0].as_f64()).collect(),
    }
}

/// Mean of per-frame breakdowns.
pub fn average(items: &[LossBreakdown], loss_weight: f64) -> LossBreakdown {
    let k = items.len().max(1) as f64;
    let levels = items.iter().map(|b| b.per_level.len()).max().unwrap_or(0);
    let depth = items.iter().map(|b| b.depth_loss).sum::<f64>() / k;
    let semantic = items.iter().map(|b| b.semantic_loss).sum::<f64>() / k;
    LossBreakdown {
        depth_loss: depth,
        semantic_loss: semantic,
        total: depth + loss_weight * semantic,
        per_level: (0..levels)
            .map(|i| {
                let d = items.iter().filter_map(|b| b.per_level.get(i)).map(|p| p.0).sum::<f64>() / k;
                let s = items.iter().filter_map(|b| b.per_level.get(i)).map(|p| p.1).sum::<f64>() / k;
                (d, s)
            })
            .collect(),
        loss_weight,
    }
}
