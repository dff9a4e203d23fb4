use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

pub const DELTA_BASE: f64 = 1.25;
/// Evaluation cap for in-domain depth.
pub const DEPTH_CAP_NEAR: f64 = 80.0;
/// Evaluation cap for cross-domain depth.
pub const DEPTH_CAP_FAR: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rmse: f64,
    pub abs_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Running sums over any number of maps; pixels are weighted equally.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DepthAccumulator {
    count: u64,
    sq: f64,
    rel: f64,
    within: [u64; 3],
}

impl DepthAccumulator {
    pub fn add(&mut self, pred: &DepthMap, gt: &DepthMap, cap: f64) -> Result<()> {
        if pred.dim() != gt.dim() {
            return Err(Error::Contract(format!(
                "depth metrics on mismatched shapes {:?} and {:?}",
                pred.dim(),
                gt.dim()
            )));
        }
        if !(cap > 0.0) {
            return Err(Error::Contract(format!("depth cap must be positive, got {cap}")));
        }
        let thresholds = [DELTA_BASE, DELTA_BASE.powi(2), DELTA_BASE.powi(3)];
        for (&p, &g) in pred.values.iter().zip(gt.values.iter()) {
            if !(p > 0.0 && g > 0.0) {
                return Err(Error::InvalidDepth { depth: if p > 0.0 { g } else { p } });
            }
            let (p, g) = (p.min(cap), g.min(cap));
            let e = p - g;
            self.sq += e * e;
            self.rel += e.abs() / g;
            let ratio = (p / g).max(g / p);
            for (k, t) in thresholds.iter().enumerate() {
                if ratio < *t {
                    self.within[k] += 1;
                }
            }
            self.count += 1;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Result<DepthMetrics> {
        if self.count == 0 {
            return Err(Error::Contract("depth metrics over zero pixels".into()));
        }
        let n = self.count as f64;
        let m = DepthMetrics {
            rmse: (self.sq / n).sqrt(),
            abs_rel: self.rel / n,
            delta1: self.within[0] as f64 / n,
            delta2: self.within[1] as f64 / n,
            delta3: self.within[2] as f64 / n,
        };
        assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3, "delta thresholds out of order");
        Ok(m)
    }
}

/// RMSE, AbsRel and threshold accuracies after clamping both maps to `cap`.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, cap: f64) -> Result<DepthMetrics> {
    let mut acc = DepthAccumulator::default();
    acc.add(pred, gt, cap)?;
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_accuracy: f64,
}

/// Counts indexed `[gt][pred]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn add(&mut self, pred: &Array2<u8>, gt: &Array2<u8>) -> Result<()> {
        if pred.dim() != gt.dim() {
            return Err(Error::Contract(format!(
                "segmentation metrics on mismatched shapes {:?} and {:?}",
                pred.dim(),
                gt.dim()
            )));
        }
        let n = self.num_classes;
        if let Some(&bad) = pred.iter().chain(gt.iter()).find(|&&c| c as usize >= n) {
            return Err(Error::Contract(format!("class index {bad} out of range for {n} classes")));
        }
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            self.counts[g as usize * n + p as usize] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn metrics(&self) -> SegMetrics {
        let n = self.num_classes;
        let per_class_iou: Vec<Option<f64>> = (0..n)
            .map(|c| {
                let tp = self.get(c, c);
                let fn_: u64 = (0..n).map(|p| self.get(c, p)).sum::<u64>() - tp;
                let fp: u64 = (0..n).map(|g| self.get(g, c)).sum::<u64>() - tp;
                let union = tp + fp + fn_;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        let miou = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        let total = self.total();
        let correct: u64 = (0..n).map(|c| self.get(c, c)).sum();
        SegMetrics {
            per_class_iou,
            miou,
            pixel_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

pub fn seg_metrics(pred: &Array2<u8>, gt: &Array2<u8>, num_classes: usize) -> Result<SegMetrics> {
    let mut cm = ConfusionMatrix::new(num_classes);
    cm.add(pred, gt)?;
    Ok(cm.metrics())
}

/// Median of a non-empty list (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}
