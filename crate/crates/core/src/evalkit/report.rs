use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::metrics::{DepthMetrics, SegMetrics};
use crate::classes::{Class, DEFAULT_PALETTE, NUM_CLASSES};
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.jsonl";
pub const MARKDOWN_FILE: &str = "summary.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub dataset: String,
    pub split: String,
}

/// One frame shown side by side with its predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeSample {
    pub rgb: Array3<u8>,
    pub gt_seg: Array2<u8>,
    pub pred_seg: Array2<u8>,
    pub gt_depth: Array2<f64>,
    pub pred_depth: Array2<f64>,
    pub max_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub meta: RunMeta,
    pub depth: Option<DepthMetrics>,
    pub seg: Option<SegMetrics>,
    /// Additional named scalars, such as a median over frames.
    pub extra: BTreeMap<String, f64>,
    /// Per-pixel absolute depth errors for the histogram.
    pub depth_abs_errors: Vec<f64>,
    pub qualitative: Vec<QualitativeSample>,
}

impl Default for RunMeta {
    fn default() -> Self {
        RunMeta { run_id: "run".into(), dataset: "unknown".into(), split: "test".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub run_id: String,
    pub dataset: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub markdown: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn iou_metric(c: Class) -> String {
    format!("iou/{}", c.name())
}

impl RunReport {
    /// Flat records; classes absent from the evaluation have no IoU record.
    pub fn records(&self) -> Vec<SummaryRecord> {
        let mut out = Vec::new();
        let mut push = |metric: String, value: f64| {
            out.push(SummaryRecord {
                run_id: self.meta.run_id.clone(),
                dataset: self.meta.dataset.clone(),
                split: self.meta.split.clone(),
                metric,
                value,
            })
        };
        if let Some(d) = &self.depth {
            push("rmse".into(), d.rmse);
            push("abs_rel".into(), d.abs_rel);
            push("delta1".into(), d.delta1);
            push("delta2".into(), d.delta2);
            push("delta3".into(), d.delta3);
        }
        if let Some(s) = &self.seg {
            push("miou".into(), s.miou);
            push("pixel_accuracy".into(), s.pixel_accuracy);
            for (c, iou) in Class::ALL.iter().zip(&s.per_class_iou) {
                if let Some(v) = iou {
                    push(iou_metric(*c), *v);
                }
            }
        }
        for (k, v) in &self.extra {
            push(k.clone(), *v);
        }
        out
    }
}

/// Depth metrics of `run_id` rebuilt from summary records.
pub fn depth_from_records(records: &[SummaryRecord], run_id: &str) -> Option<DepthMetrics> {
    let get = |m: &str| records.iter().find(|r| r.run_id == run_id && r.metric == m).map(|r| r.value);
    Some(DepthMetrics {
        rmse: get("rmse")?,
        abs_rel: get("abs_rel")?,
        delta1: get("delta1")?,
        delta2: get("delta2")?,
        delta3: get("delta3")?,
    })
}

pub fn seg_from_records(records: &[SummaryRecord], run_id: &str) -> Option<SegMetrics> {
    let get = |m: &str| records.iter().find(|r| r.run_id == run_id && r.metric == m).map(|r| r.value);
    Some(SegMetrics {
        miou: get("miou")?,
        pixel_accuracy: get("pixel_accuracy")?,
        per_class_iou: Class::ALL.iter().map(|c| get(&iou_metric(*c))).collect(),
    })
}

/// Every run in `records`, in first-seen order, with its metrics rebuilt.
/// Records that are neither depth, segmentation nor IoU values become extras.
pub fn reports_from_records(records: &[SummaryRecord]) -> Vec<RunReport> {
    const KNOWN: [&str; 7] = ["rmse", "abs_rel", "delta1", "delta2", "delta3", "miou", "pixel_accuracy"];
    let mut runs: Vec<RunReport> = Vec::new();
    for r in records {
        if !runs.iter().any(|run| run.meta.run_id == r.run_id) {
            runs.push(RunReport {
                meta: RunMeta { run_id: r.run_id.clone(), dataset: r.dataset.clone(), split: r.split.clone() },
                depth: depth_from_records(records, &r.run_id),
                seg: seg_from_records(records, &r.run_id),
                ..Default::default()
            });
        }
        if !KNOWN.contains(&r.metric.as_str()) && !r.metric.starts_with("iou/") {
            let run = runs.iter_mut().find(|run| run.meta.run_id == r.run_id).expect("inserted above");
            run.extra.insert(r.metric.clone(), r.value);
        }
    }
    runs
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map_or("-".to_string(), |v| format!("{:.*}", digits, v * scale))
}

fn markdown(runs: &[RunReport]) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    s.push_str("| run | dataset | split | RMSE (m) | AbsRel | d1 | d2 | d3 | mIoU (%) | pixel acc (%) |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for r in runs {
        let d = r.depth.as_ref();
        let g = r.seg.as_ref();
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.meta.run_id,
            r.meta.dataset,
            r.meta.split,
            fmt_opt(d.map(|d| d.rmse), 1.0, 3),
            fmt_opt(d.map(|d| d.abs_rel), 1.0, 4),
            fmt_opt(d.map(|d| d.delta1), 1.0, 4),
            fmt_opt(d.map(|d| d.delta2), 1.0, 4),
            fmt_opt(d.map(|d| d.delta3), 1.0, 4),
            fmt_opt(g.map(|g| g.miou), 100.0, 2),
            fmt_opt(g.map(|g| g.pixel_accuracy), 100.0, 2),
        ));
    }
    if runs.iter().any(|r| r.seg.is_some()) {
        s.push_str("\n## Per-class IoU (%)\n\n| run |");
        for c in Class::ALL {
            s.push_str(&format!(" {} |", c.name()));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(NUM_CLASSES));
        s.push('\n');
        for r in runs.iter().filter(|r| r.seg.is_some()) {
            s.push_str(&format!("| {} |", r.meta.run_id));
            for v in &r.seg.as_ref().expect("filtered").per_class_iou {
                s.push_str(&format!(" {} |", fmt_opt(*v, 100.0, 2)));
            }
            s.push('\n');
        }
    }
    if runs.iter().any(|r| !r.extra.is_empty()) {
        s.push_str("\n## Other values\n\n| run | name | value |\n|---|---|---|\n");
        for r in runs {
            for (k, v) in &r.extra {
                s.push_str(&format!("| {} | {} | {} |\n", r.meta.run_id, k, v));
            }
        }
    }
    s
}

const RUN_COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, color: [u8; 3]) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

/// Grouped bars: one group per class, one bar per run, with the class color
/// as a strip under each group.
fn per_class_plot(runs: &[&RunReport]) -> RgbImage {
    let (bar, gap, plot_h, strip) = (10u32, 12u32, 200u32, 10u32);
    let group = bar * runs.len() as u32 + gap;
    let mut img = RgbImage::from_pixel(group * NUM_CLASSES as u32 + gap, plot_h + strip + 4, Rgb([255, 255, 255]));
    for c in 0..NUM_CLASSES {
        let x0 = gap + c as u32 * group;
        fill(&mut img, x0, plot_h + 2, bar * runs.len() as u32, strip, DEFAULT_PALETTE[c]);
        for (k, r) in runs.iter().enumerate() {
            if let Some(Some(iou)) = r.seg.as_ref().map(|s| s.per_class_iou[c]) {
                let h = (iou.clamp(0.0, 1.0) * plot_h as f64).round() as u32;
                fill(&mut img, x0 + k as u32 * bar, plot_h - h, bar - 1, h, RUN_COLORS[k % RUN_COLORS.len()]);
            }
        }
    }
    let width = img.width();
    fill(&mut img, 0, plot_h, width, 1, [0, 0, 0]);
    img
}

fn histogram_plot(errors: &[f64]) -> RgbImage {
    let (bins, bw, plot_h) = (40usize, 6u32, 160u32);
    let mut img = RgbImage::from_pixel(bins as u32 * bw + 2, plot_h + 2, Rgb([255, 255, 255]));
    let hi = errors.iter().copied().fold(0.0f64, f64::max);
    let mut counts = vec![0usize; bins];
    for &e in errors {
        let k = if hi > 0.0 { ((e / hi) * bins as f64) as usize } else { 0 };
        counts[k.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1);
    for (k, &c) in counts.iter().enumerate() {
        let h = (c as f64 / top as f64 * plot_h as f64).round() as u32;
        fill(&mut img, 1 + k as u32 * bw, plot_h - h, bw - 1, h, RUN_COLORS[0]);
    }
    let width = img.width();
    fill(&mut img, 0, plot_h, width, 1, [0, 0, 0]);
    img
}

fn qualitative_plot(samples: &[QualitativeSample]) -> RgbImage {
    let (h, w) = samples[0].gt_seg.dim();
    let pad = 2u32;
    let (tw, th) = (w as u32 + pad, h as u32 + pad);
    let mut img = RgbImage::from_pixel(5 * tw, samples.len() as u32 * th, Rgb([255, 255, 255]));
    let depth_gray = |d: f64, max: f64| {
        let v = (255.0 * (1.0 - (d / max).clamp(0.0, 1.0).sqrt())).round() as u8;
        [v, v, v]
    };
    for (row, s) in samples.iter().enumerate() {
        let y0 = row as u32 * th;
        for j in 0..h.min(s.gt_seg.nrows()) {
            for i in 0..w.min(s.gt_seg.ncols()) {
                let tiles = [
                    [s.rgb[[j, i, 0]], s.rgb[[j, i, 1]], s.rgb[[j, i, 2]]],
                    DEFAULT_PALETTE[(s.gt_seg[[j, i]] as usize).min(NUM_CLASSES - 1)],
                    DEFAULT_PALETTE[(s.pred_seg[[j, i]] as usize).min(NUM_CLASSES - 1)],
                    depth_gray(s.gt_depth[[j, i]], s.max_depth),
                    depth_gray(s.pred_depth[[j, i]], s.max_depth),
                ];
                for (t, color) in tiles.iter().enumerate() {
                    img.put_pixel(t as u32 * tw + i as u32, y0 + j as u32, Rgb(*color));
                }
            }
        }
    }
    img
}

fn file_stem(run_id: &str) -> String {
    run_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes the line-delimited summary, a markdown table, and raster plots:
/// per-class IoU bars, depth error histograms and prediction grids.
pub fn emit_report(runs: &[RunReport], dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let summary = dir.join(SUMMARY_FILE);
    let mut f = fs::File::create(&summary)?;
    for r in runs {
        for rec in r.records() {
            writeln!(f, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    f.flush()?;
    let md = dir.join(MARKDOWN_FILE);
    fs::write(&md, markdown(runs))?;

    let mut plots = Vec::new();
    let with_seg: Vec<&RunReport> = runs.iter().filter(|r| r.seg.is_some()).collect();
    if !with_seg.is_empty() {
        let p = dir.join("per_class_iou.png");
        per_class_plot(&with_seg).save(&p)?;
        plots.push(p);
    }
    for r in runs {
        let stem = file_stem(&r.meta.run_id);
        if !r.depth_abs_errors.is_empty() {
            let p = dir.join(format!("depth_error_{stem}.png"));
            histogram_plot(&r.depth_abs_errors).save(&p)?;
            plots.push(p);
        }
        if let Some(first) = r.qualitative.first() {
            if r.qualitative.iter().any(|s| s.gt_seg.dim() != first.gt_seg.dim()) {
                return Err(Error::Shape(format!("run {}: qualitative samples differ in size", r.meta.run_id)));
            }
            let p = dir.join(format!("qualitative_{stem}.png"));
            qualitative_plot(&r.qualitative).save(&p)?;
            plots.push(p);
        }
    }
    Ok(ReportFiles { summary, markdown: md, plots })
}
