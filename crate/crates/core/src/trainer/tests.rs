use super::*;
use crate::net::{ArchConfig, Checkpoint};
use crate::synthgen::{DatasetRecipe, Trajectory};
use crate::NUM_CLASSES;

fn small_data(seed: u64, frames: usize) -> Vec<Trajectory> {
    DatasetRecipe { seed, width: 48, height: 48, frame_count: frames, ..DatasetRecipe::toy() }
        .generate()
        .unwrap()
}

fn small_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        arch: ArchConfig { num_classes: NUM_CLASSES, ..ArchConfig::tiny(4) },
        epochs,
        augment: AugmentConfig::off(),
        seed,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_the_initialization_only() {
    let data = small_data(1, 6);
    let out = train(&small_config(0, 0), &data, None, &data, None).unwrap();
    assert_eq!(out.epochs.len(), 1);
    assert!(out.steps.is_empty());
    assert_eq!(out.best.epoch, 0);
    assert_eq!(out.best, out.last);
    assert_eq!(out.stop, StopReason::Completed);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = small_data(2, 8);
    let cfg = TrainConfig { augment: AugmentConfig::default(), ..small_config(5, 2) };
    let a = train(&cfg, &data, None, &data, None).unwrap();
    let b = train(&cfg, &data, None, &data, None).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.best.params_hash(), b.best.params_hash());
    let c = train(&TrainConfig { seed: 6, ..cfg }, &data, None, &data, None).unwrap();
    assert_ne!(a.steps, c.steps);
}

#[test]
fn evaluation_reproduces_stored_metrics_and_survives_a_file_round_trip() {
    let data = small_data(3, 6);
    let dir = tempfile::tempdir().unwrap();
    let out = train(&small_config(1, 2), &data, None, &data, Some(dir.path())).unwrap();
    let loaded = Checkpoint::load(&dir.path().join(run::BEST_CHECKPOINT)).unwrap();
    assert_eq!(loaded, out.best);

    let eval = evaluate(&loaded, &data, CapProtocol::Cap80, 0).unwrap();
    let stored = loaded.metrics.clone();
    let fresh = eval.stored();
    for (a, b) in [
        (stored.rmse, fresh.rmse),
        (stored.abs_rel, fresh.abs_rel),
        (stored.delta1, fresh.delta1),
        (stored.miou, fresh.miou),
        (stored.pixel_accuracy, fresh.pixel_accuracy),
        (stored.median_abs_rel, fresh.median_abs_rel),
    ] {
        assert!((a.unwrap() - b.unwrap()).abs() <= 1e-6);
    }

    let before = predict_trajectory(&out.best.arch, &out.best.params, &data[0]).unwrap();
    let after = predict_trajectory(&loaded.arch, &loaded.params, &data[0]).unwrap();
    assert_eq!(before, after);

    let log = std::fs::read_to_string(dir.path().join(run::STEP_LOG_FILE)).unwrap();
    assert!(log.starts_with("step,epoch,depth,semantic,total,w,lr"));
    assert_eq!(log.lines().count(), out.steps.len() + 1);
    let config = std::fs::read_to_string(dir.path().join(run::CONFIG_FILE)).unwrap();
    assert_eq!(config, small_config(1, 2).canonical());
    assert!(dir.path().join(run::LAST_CHECKPOINT).exists());
}

#[test]
fn evaluation_refuses_a_mismatched_fingerprint() {
    let data = small_data(4, 4);
    let mut ckpt = train(&small_config(0, 0), &data, None, &data, None).unwrap().best;
    ckpt.fingerprint = "0".repeat(64);
    assert!(matches!(
        evaluate(&ckpt, &data, CapProtocol::Cap80, 0),
        Err(crate::Error::Fingerprint { .. })
    ));
}

#[test]
fn cap_protocol_only_matters_above_the_near_cap() {
    // The toy flight is at 40 m, so no ground-truth pixel exceeds 80 m.
    let data = small_data(5, 4);
    let ckpt = train(&small_config(0, 0), &data, None, &data, None).unwrap().best;
    let mut near = ckpt.clone();
    for t in near.params.tensors_mut() {
        for v in t.data_mut() {
            *v *= 0.5;
        }
    }
    let a = evaluate(&near, &data, CapProtocol::Cap80, 0).unwrap();
    let b = evaluate(&near, &data, CapProtocol::Cap200, 0).unwrap();
    let (da, db) = (a.depth.unwrap(), b.depth.unwrap());
    let preds_above = a.depth_abs_errors != b.depth_abs_errors;
    if preds_above {
        assert!(db.rmse >= da.rmse);
    } else {
        assert_eq!(da, db);
    }
    assert_eq!(a.seg, b.seg);
}

#[test]
fn huge_learning_rate_diverges_and_keeps_a_finite_checkpoint() {
    let data = small_data(6, 6);
    let cfg = TrainConfig { learning_rate: 1e30, ..small_config(0, 5) };
    let out = train(&cfg, &data, None, &data, None).unwrap();
    assert!(matches!(out.stop, StopReason::Diverged { .. }), "{:?}", out.stop);
    assert!(out.last.params.tensors().iter().all(|t| t.is_finite()));
}

#[test]
fn mixed_training_draws_from_both_datasets() {
    let a = small_data(7, 6);
    let b = small_data(8, 5);
    let cfg = TrainConfig {
        mix: Some(MixConfig { dataset_b: "b".into(), ratio: "1:1".parse().unwrap(), epoch_size: Some(6) }),
        ..small_config(0, 1)
    };
    let out = train(&cfg, &a, Some(&b), &a, None).unwrap();
    assert_eq!(out.steps.len(), 2);
    assert!(train(&cfg, &a, None, &a, None).is_err());
}

#[test]
fn loss_drops_over_ten_epochs_for_nearly_every_seed() {
    let data = small_data(9, 6);
    let seeds = 20;
    let dropped = (0..seeds)
        .filter(|&seed| {
            let out = train(&small_config(seed, 10), &data, None, &data, None).unwrap();
            let first = out.epochs[1].train_loss.unwrap();
            let last = out.epochs[10].train_loss.unwrap();
            last < first
        })
        .count();
    assert!(dropped * 100 >= 95 * seeds as usize, "{dropped}/{seeds}");
}
