use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use aeroscene_core::evalkit::{emit_report, read_summary, reports_from_records, RunMeta, RunReport, SummaryRecord, SUMMARY_FILE};
use aeroscene_core::geometry::{point_cloud_from_maps, PixelAttributes};
use aeroscene_core::net::Checkpoint;
use aeroscene_core::synthgen::{read_dataset, write_dataset, DatasetRecipe, PitchMode, Trajectory};
use aeroscene_core::trainer::{
    self, evaluate, fingerprint, predict_windows, save_prediction, AugmentConfig, CapProtocol, FramePrediction,
    MixConfig, StopReason, TrainConfig,
};

use crate::cloud::{write_cloud, CLOUD_FILE};
use crate::manifest::{config_hash, read_manifest, RunDir, MANIFEST_FILE};
use crate::{
    Cap, Coloring, EvalArgs, FrameArgs, GenerateArgs, OutputArgs, PredictArgs, Preset, ReconstructArgs, ReplayArgs,
    ReportArgs, TrainArgs, UserError, View, OUT_ROOT_ENV,
};

pub const RECIPE_FILE: &str = "recipe.json";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const METRICS_FILE: &str = "metrics.json";

/// A fully resolved command. Stored in the manifest, so it must not depend
/// on anything outside itself except the listed input paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "lowercase")]
enum Plan {
    Generate { recipe: DatasetRecipe },
    Train { config: TrainConfig, data: PathBuf, data_b: Option<PathBuf>, val: Option<PathBuf> },
    Eval { ckpt: PathBuf, data: PathBuf, cap: CapProtocol, run_id: Option<String>, qualitative: usize },
    Predict { frame: FrameSel },
    Reconstruct { frame: FrameSel, trunc: f64, color: Coloring },
    Report { summaries: Vec<PathBuf> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameSel {
    ckpt: PathBuf,
    data: PathBuf,
    trajectory: Option<String>,
    frame: usize,
}

impl From<FrameArgs> for FrameSel {
    fn from(a: FrameArgs) -> Self {
        FrameSel { ckpt: a.ckpt, data: a.data, trajectory: a.trajectory, frame: a.frame }
    }
}

impl Plan {
    fn name(&self) -> &'static str {
        match self {
            Plan::Generate { .. } => "generate",
            Plan::Train { .. } => "train",
            Plan::Eval { .. } => "eval",
            Plan::Predict { .. } => "predict",
            Plan::Reconstruct { .. } => "reconstruct",
            Plan::Report { .. } => "report",
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Plan::Generate { .. } => vec![],
            Plan::Train { data, data_b, val, .. } => {
                [Some(data), data_b.as_ref(), val.as_ref()].into_iter().flatten().cloned().collect()
            }
            Plan::Eval { ckpt, data, .. } => vec![ckpt.clone(), data.clone()],
            Plan::Predict { frame } | Plan::Reconstruct { frame, .. } => vec![frame.ckpt.clone(), frame.data.clone()],
            Plan::Report { summaries } => summaries.clone(),
        }
    }

    fn args(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan serializes")["args"].take()
    }
}

fn default_out(plan: &Plan) -> PathBuf {
    let root = std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{}-{}", plan.name(), &config_hash(plan.name(), &plan.args())[..12]))
}

/// Runs `plan` in its output directory and records the manifest. A run that
/// finishes with a warning keeps its artifacts and exits with a user error.
fn execute(plan: Plan, output: OutputArgs) -> anyhow::Result<PathBuf> {
    let dir = output.out.clone().unwrap_or_else(|| default_out(&plan));
    let run = RunDir::claim(&dir, plan.name(), plan.args(), plan.inputs(), output.overwrite)?;
    info!("{} -> {}", plan.name(), dir.display());
    let warning = match run_plan(&plan, &dir) {
        Ok(w) => w,
        Err(e) => {
            let _ = fs::remove_dir_all(&dir);
            return Err(e);
        }
    };
    let manifest = run.finish()?;
    info!("wrote {} files, revision {}", manifest.outputs.len(), manifest.revision);
    match warning {
        Some(w) => Err(UserError::new(w).into()),
        None => Ok(dir),
    }
}

fn run_plan(plan: &Plan, dir: &Path) -> anyhow::Result<Option<String>> {
    match plan {
        Plan::Generate { recipe } => {
            let trajs = recipe.generate()?;
            let manifest = write_dataset(dir, &trajs)?;
            fs::write(dir.join(RECIPE_FILE), serde_json::to_string_pretty(recipe)?)?;
            info!("generated {} trajectories", manifest.trajectories.len());
            Ok(None)
        }
        Plan::Train { config, data, data_b, val } => run_train(config, data, data_b.as_deref(), val.as_deref(), dir),
        Plan::Eval { ckpt, data, cap, run_id, qualitative } => {
            let ckpt = load_checkpoint(ckpt)?;
            let trajs = load_dataset(data)?;
            let outcome = evaluate(&ckpt, &trajs, *cap, *qualitative)?;
            let mut extra = BTreeMap::new();
            if let Some(m) = outcome.median_abs_rel {
                extra.insert("median_abs_rel".to_string(), m);
            }
            extra.insert("depth_cap".to_string(), cap.cap());
            let report = RunReport {
                meta: RunMeta {
                    run_id: run_id.clone().unwrap_or_else(|| file_name(dir)),
                    dataset: file_name(data),
                    split: "eval".into(),
                },
                depth: outcome.depth,
                seg: outcome.seg.clone(),
                extra,
                depth_abs_errors: outcome.depth_abs_errors.clone(),
                qualitative: outcome.qualitative.clone(),
            };
            emit_report(&[report], dir)?;
            fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&outcome.stored())?)?;
            Ok(None)
        }
        Plan::Predict { frame } => {
            let (ckpt, trajs, index) = load_frame(frame)?;
            let pred = predict_frame(&ckpt, &trajs[index], frame.frame)?;
            if pred.depth.is_none() && ckpt.arch.task.has_depth() {
                warn!("frame {} has no predecessor; only the segmentation is written", frame.frame);
            }
            save_prediction(dir, &format!("frame_{:06}", frame.frame), &pred, ckpt.arch.max_depth)?;
            Ok(None)
        }
        Plan::Reconstruct { frame, trunc, color } => {
            let (ckpt, trajs, index) = load_frame(frame)?;
            let sample = &trajs[index].frames[frame.frame];
            let pred = predict_frame(&ckpt, &trajs[index], frame.frame)?;
            let depth = pred.depth.as_ref().ok_or_else(|| {
                UserError::new(format!(
                    "frame {} has no depth prediction: the model needs a previous frame and a depth head",
                    frame.frame
                ))
            })?;
            let intr = &sample.intrinsics;
            let mut cloud = point_cloud_from_maps(depth, PixelAttributes::Rgb(&sample.rgb), intr, *trunc)?;
            match (&pred.seg, color) {
                (Some(seg), _) => {
                    let labeled = point_cloud_from_maps(depth, PixelAttributes::Labels(seg), intr, *trunc)?;
                    cloud.labels = labeled.labels;
                    if matches!(color, Coloring::Labels) {
                        cloud.colors = labeled.colors;
                    }
                }
                (None, Coloring::Labels) => {
                    return Err(UserError::new("--color labels needs a model with a segmentation head").into())
                }
                (None, Coloring::Rgb) => {}
            }
            write_cloud(&dir.join(CLOUD_FILE), &cloud)?;
            info!("{} points", cloud.len());
            Ok(None)
        }
        Plan::Report { summaries } => {
            let records = collect_records(summaries)?;
            emit_report(&reports_from_records(&records), dir)?;
            Ok(None)
        }
    }
}

/// Summary records of several runs; run ids must be unique across files.
fn collect_records(summaries: &[PathBuf]) -> anyhow::Result<Vec<SummaryRecord>> {
    let mut records: Vec<SummaryRecord> = Vec::new();
    for path in summaries {
        let found = read_summary(path).map_err(|e| UserError::new(format!("reading {}: {e}", path.display())))?;
        if let Some(r) = found.iter().find(|r| records.iter().any(|o| o.run_id == r.run_id)) {
            return Err(UserError::new(format!(
                "run id {:?} appears in more than one summary; rename one with eval --run-id",
                r.run_id
            ))
            .into());
        }
        records.extend(found);
    }
    Ok(records)
}

fn run_train(
    config: &TrainConfig,
    data: &Path,
    data_b: Option<&Path>,
    val: Option<&Path>,
    dir: &Path,
) -> anyhow::Result<Option<String>> {
    let a = load_dataset(data)?;
    let b = data_b.map(load_dataset).transpose()?;
    let v = match val {
        Some(p) => load_dataset(p)?,
        None => a.clone(),
    };
    let out = trainer::train(config, &a, b.as_deref(), &v, Some(dir))?;
    let summary = serde_json::json!({
        "stop": format!("{:?}", out.stop),
        "epochs_run": out.epochs.len().saturating_sub(1),
        "steps": out.steps.len(),
        "best_epoch": out.best.epoch,
        "best_metrics": out.best.metrics,
        "best_params_hash": out.best.params_hash(),
        "fingerprint": out.best.fingerprint,
    });
    fs::write(dir.join(TRAIN_SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    info!("stopped: {:?}, best epoch {}", out.stop, out.best.epoch);
    Ok(match out.stop {
        StopReason::Diverged { step } => Some(format!(
            "training diverged at step {step}; the last finite weights are in {}",
            dir.display()
        )),
        _ => None,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load_dataset(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    read_dataset(path).with_context(|| format!("dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))?;
    let expected = fingerprint(&ckpt.arch);
    if ckpt.fingerprint != expected {
        return Err(aeroscene_core::Error::Fingerprint { expected, found: ckpt.fingerprint }.into());
    }
    ckpt.params.check_against(&ckpt.arch)?;
    Ok(ckpt)
}

fn load_frame(sel: &FrameSel) -> anyhow::Result<(Checkpoint, Vec<Trajectory>, usize)> {
    let ckpt = load_checkpoint(&sel.ckpt)?;
    let trajs = load_dataset(&sel.data)?;
    let index = match &sel.trajectory {
        Some(id) => trajs.iter().position(|t| &t.id == id).ok_or_else(|| {
            let ids: Vec<_> = trajs.iter().map(|t| t.id.as_str()).collect();
            UserError::new(format!("no trajectory {id:?} in {}; available: {}", sel.data.display(), ids.join(", ")))
        })?,
        None => 0,
    };
    let len = trajs[index].frames.len();
    if sel.frame >= len {
        return Err(UserError::new(format!("frame {} out of range: trajectory has {len} frames", sel.frame)).into());
    }
    Ok((ckpt, trajs, index))
}

/// Prediction for frame `t` from the window of frames ending at `t`.
fn predict_frame(ckpt: &Checkpoint, traj: &Trajectory, t: usize) -> anyhow::Result<FramePrediction> {
    let len = (t + 1).min(ckpt.arch.sequence_length.max(1));
    let window = &traj.frames[t + 1 - len..=t];
    let mut preds = predict_windows(&ckpt.arch, &ckpt.params, &[window])?;
    Ok(preds.remove(0))
}

pub fn generate(a: GenerateArgs) -> anyhow::Result<PathBuf> {
    let mut recipe = match &a.scene {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<DatasetRecipe>(&text)
                .map_err(|e| UserError::new(format!("invalid scene file {}: {e}", path.display())))?
        }
        None => DatasetRecipe::toy(),
    };
    if let Some(n) = a.frames {
        recipe.frame_count = n;
    }
    if let Some(s) = a.seed {
        recipe.seed = s;
    }
    if let Some(n) = a.trajectories {
        recipe.trajectories = n;
    }
    match a.view {
        Some(View::Nadir) => recipe.pitch_mode = PitchMode::Nadir,
        Some(View::Forward) => recipe.pitch_mode = PitchMode::Forward { pitch_degrees: a.pitch },
        None => {}
    }
    recipe.validate()?;
    execute(Plan::Generate { recipe }, a.output)
}

pub fn train(a: TrainArgs) -> anyhow::Result<PathBuf> {
    let mut config = match (&a.config, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| UserError::new(format!("invalid config file {}: {e}", path.display())))?
        }
        (None, Preset::Default) => TrainConfig::default(),
        (None, Preset::Toy) => TrainConfig::toy_overfit(0),
    };
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch {
        config.batch_size = v;
    }
    if let Some(v) = a.lr {
        config.learning_rate = v;
    }
    if let Some(v) = a.loss_weight {
        config.loss_weight = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if a.no_augment {
        config.augment = AugmentConfig::off();
    }
    let data = a.data[0].clone();
    let data_b = a.data.get(1).cloned();
    if let Some(b) = &data_b {
        config.mix = Some(MixConfig { dataset_b: b.clone(), ratio: a.ratio.parse()?, epoch_size: a.epoch_size });
    }
    config.validate()?;
    execute(Plan::Train { config, data, data_b, val: a.val }, a.output)
}

pub fn eval(a: EvalArgs) -> anyhow::Result<PathBuf> {
    let cap = match a.cap {
        Cap::Near => CapProtocol::Cap80,
        Cap::Far => CapProtocol::Cap200,
    };
    let plan = Plan::Eval { ckpt: a.ckpt, data: a.data, cap, run_id: a.run_id, qualitative: a.qualitative };
    execute(plan, a.output)
}

pub fn predict(a: PredictArgs) -> anyhow::Result<PathBuf> {
    execute(Plan::Predict { frame: a.frame.into() }, a.output)
}

pub fn reconstruct(a: ReconstructArgs) -> anyhow::Result<PathBuf> {
    if !(a.trunc > 0.0) {
        return Err(UserError::new(format!("--trunc must be positive, got {}", a.trunc)).into());
    }
    execute(Plan::Reconstruct { frame: a.frame.into(), trunc: a.trunc, color: a.color }, a.output)
}

pub fn report(a: ReportArgs) -> anyhow::Result<PathBuf> {
    let summaries: Vec<PathBuf> = a.runs.into_iter().map(|p| if p.is_dir() { p.join(SUMMARY_FILE) } else { p }).collect();
    collect_records(&summaries)?;
    execute(Plan::Report { summaries }, a.output)
}

pub fn replay(a: ReplayArgs) -> anyhow::Result<PathBuf> {
    let dir = if a.manifest.is_dir() {
        a.manifest.clone()
    } else {
        a.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(UserError::new(format!("no {MANIFEST_FILE} at {}", dir.display())).into());
    }
    let manifest = read_manifest(&dir)?;
    let plan: Plan = serde_json::from_value(serde_json::json!({ "command": manifest.command, "args": manifest.args }))
        .map_err(|e| UserError::new(format!("manifest in {} is not replayable: {e}", dir.display())))?;
    execute(plan, a.output)
}
