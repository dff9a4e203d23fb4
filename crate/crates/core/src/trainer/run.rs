use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::augment::augment;
use super::batch::window_loss;
use super::config::{fingerprint, TrainConfig};
use super::data::{collate, load_window, median_coarse_parallax, window_starts};
use super::eval::{evaluate_params, EvalOutcome};
use super::mix::{default_epoch_size, mix_sampler, SampleRef};
use crate::error::{Error, Result};
use crate::net::{Checkpoint, ParamStore, Tape, Tensor};
use crate::objectives::SkyHandling;
use crate::synthgen::Trajectory;

pub const STEP_LOG_FILE: &str = "train_log.csv";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub depth: f64,
    pub semantic: f64,
    pub total: f64,
    pub w: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub rmse: Option<f64>,
    pub abs_rel: Option<f64>,
    pub median_abs_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub miou: Option<f64>,
    pub pixel_accuracy: Option<f64>,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Completed,
    Converged { epoch: usize },
    /// Non-finite loss; `last` holds the parameters before that step.
    Diverged { step: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub stop: StopReason,
    pub final_eval: EvalOutcome,
}

/// Validation order: higher mIoU first, then lower RMSE.
fn better(a: &EvalOutcome, b: &EvalOutcome) -> bool {
    let key = |e: &EvalOutcome| {
        (
            e.seg.as_ref().map_or(f64::NEG_INFINITY, |s| s.miou),
            e.depth.map_or(f64::NEG_INFINITY, |d| -d.rmse),
        )
    };
    let (ka, kb) = (key(a), key(b));
    ka.0 > kb.0 || (ka.0 == kb.0 && ka.1 > kb.1)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Supervised training with per-epoch validation. Windows are drawn in a
/// seeded order (or by the mixing sampler), augmented with a seeded stream,
/// and the best checkpoint is kept by validation mIoU then RMSE. When
/// `out_dir` is given the configuration, logs and checkpoints are written
/// there.
pub fn train(
    cfg: &TrainConfig,
    train_a: &[Trajectory],
    train_b: Option<&[Trajectory]>,
    val: &[Trajectory],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let len = cfg.arch.sequence_length;
    let sources: Vec<&[Trajectory]> = std::iter::once(train_a).chain(train_b).collect();
    let starts: Vec<Vec<(usize, usize)>> = sources.iter().map(|s| window_starts(s, len)).collect();
    if starts[0].is_empty() {
        return Err(Error::Contract(format!("training data holds no window of {len} frames")));
    }
    if val.is_empty() {
        return Err(Error::Contract("validation data is empty".into()));
    }
    if let Some(first) = train_a.first().and_then(|t| t.frames.first()) {
        cfg.arch.check_input(first.intrinsics.width, first.intrinsics.height)?;
    }

    let mut arch = cfg.arch.clone();
    if cfg.data_driven_init && arch.task.has_depth() {
        if let Some(p) = median_coarse_parallax(train_a, &arch)? {
            arch.initial_parallax = p;
        }
    }
    let fp = fingerprint(&arch);
    let mut params = ParamStore::<f32>::init(&arch, cfg.seed)?;
    let mut adam = Adam::new(&params, cfg.beta1, cfg.beta2, cfg.epsilon);
    let sky = if cfg.exclude_sky_from_depth { SkyHandling::Exclude { max_depth: arch.max_depth } } else { SkyHandling::Include };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), cfg.canonical())?;
    }

    let checkpoint = |params: &ParamStore<f32>, epoch: usize, eval: &EvalOutcome| Checkpoint {
        arch: arch.clone(),
        params: params.clone(),
        epoch,
        metrics: eval.stored(),
        fingerprint: fp.clone(),
    };
    let record = |epoch: usize, train_loss: Option<f64>, eval: &EvalOutcome, ck: &Checkpoint| EpochRecord {
        epoch,
        train_loss,
        rmse: eval.depth.map(|d| d.rmse),
        abs_rel: eval.depth.map(|d| d.abs_rel),
        median_abs_rel: eval.median_abs_rel,
        delta1: eval.depth.map(|d| d.delta1),
        miou: eval.seg.as_ref().map(|s| s.miou),
        pixel_accuracy: eval.seg.as_ref().map(|s| s.pixel_accuracy),
        params_hash: ck.params_hash(),
    };

    let mut eval = evaluate_params(&arch, &params, val, cfg.max_depth_cap, 0)?;
    let init = checkpoint(&params, 0, &eval);
    let mut epochs = vec![record(0, None, &eval, &init)];
    let mut best = (init.clone(), eval.clone());
    let mut last = init;
    let mut steps = Vec::new();
    let mut stop = StopReason::Completed;

    let mixed = match (&cfg.mix, train_b) {
        (Some(mix), Some(_)) => {
            let size = mix.epoch_size.unwrap_or_else(|| default_epoch_size(starts[0].len(), starts[1].len()));
            Some(mix_sampler(starts[0].len(), starts[1].len(), mix.ratio, size, cfg.epochs, cfg.seed)?)
        }
        (Some(_), None) => return Err(Error::Config("mixing needs a second training dataset".into())),
        _ => None,
    };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED_0001));
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED_0002));
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0usize;

    'epochs: for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let draws: Vec<SampleRef> = match &mixed {
            Some(m) => m[epoch - 1].clone(),
            None => {
                let mut idx: Vec<usize> = (0..starts[0].len()).collect();
                idx.shuffle(&mut order_rng);
                idx.into_iter().map(|index| SampleRef { source: 0, index }).collect()
            }
        };
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for chunk in draws.chunks(cfg.batch_size) {
            let windows = chunk
                .iter()
                .map(|d| {
                    let w = load_window(sources[d.source], starts[d.source][d.index], len)?;
                    Ok(augment(&w, &cfg.augment, &mut aug_rng))
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = collate::<f32>(&windows)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let (loss, breakdown) = window_loss(&mut tape, &arch, &bound, &batch, cfg.loss_weight, sky)?;
            let step = steps.len() + 1;
            if !breakdown.total.is_finite() {
                stop = StopReason::Diverged { step };
                break 'epochs;
            }
            let mut grads = tape.backward(loss);
            let grads: Vec<Tensor<f32>> = bound
                .vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.dims())))
                .collect();
            if grads.iter().any(|g| !g.is_finite()) {
                stop = StopReason::Diverged { step };
                break 'epochs;
            }
            adam.update(&mut params, &grads, lr);
            steps.push(StepRecord {
                step,
                epoch,
                depth: breakdown.depth_loss,
                semantic: breakdown.semantic_loss,
                total: breakdown.total,
                w: cfg.loss_weight,
                lr,
            });
            epoch_loss += breakdown.total;
            epoch_steps += 1;
        }
        let mean_loss = epoch_loss / epoch_steps.max(1) as f64;
        eval = evaluate_params(&arch, &params, val, cfg.max_depth_cap, 0)?;
        last = checkpoint(&params, epoch, &eval);
        epochs.push(record(epoch, Some(mean_loss), &eval, &last));
        log::info!(
            "epoch {epoch}: loss {mean_loss:.5} miou {:?} rmse {:?}",
            eval.seg.as_ref().map(|s| s.miou),
            eval.depth.map(|d| d.rmse)
        );
        if better(&eval, &best.1) {
            best = (last.clone(), eval.clone());
        }
        if let Some(es) = cfg.early_stop {
            if mean_loss < best_loss * (1.0 - es.min_delta) {
                best_loss = mean_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    stop = StopReason::Converged { epoch };
                    break;
                }
            }
        }
    }

    let final_eval = best.1.clone();
    if let Some(dir) = out_dir {
        write_csv(&dir.join(STEP_LOG_FILE), &steps)?;
        write_csv(&dir.join(EPOCH_LOG_FILE), &epochs)?;
        best.0.save(&dir.join(BEST_CHECKPOINT))?;
        last.save(&dir.join(LAST_CHECKPOINT))?;
    }
    Ok(TrainOutcome { best: best.0, last, epochs, steps, stop, final_eval })
}
