use aeroscene_core::geometry::{CameraIntrinsics, MotionTransform};
use aeroscene_core::net::model::cosemdepth_forward;
use aeroscene_core::net::params::{encoder_param_count, param_count};
use aeroscene_core::net::{ArchConfig, Checkpoint, ParamStore, StoredMetrics, Task, Tensor};
use aeroscene_core::objectives::SkyHandling;
use aeroscene_core::synthgen::DatasetRecipe;
use aeroscene_core::trainer::data::{collate, load_window};
use aeroscene_core::trainer::{check_loss_gradient, fingerprint};
use aeroscene_core::Error;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameter count written out from the layer description: two 3x3 encoder
/// convolutions per level, 7-layer parallax refiners emitting 1 + 4
/// channels, semantic refiners emitting 4 + N_c channels.
fn closed_form_count(cfg: &ArchConfig) -> usize {
    let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
    let mut total = 0;
    let mut cin = 3;
    for &f in &cfg.filters_per_level {
        total += conv(cin, f) + conv(f, f);
        cin = f;
    }
    let cost = (2 * cfg.sncv_radius + 1).pow(2) + cfg.pscv_candidates;
    for l in 1..=cfg.num_levels {
        let coarsest = l == cfg.num_levels;
        if cfg.task != Task::SemanticOnly {
            let mut c = cfg.filters_per_level[l - 1] + cost + 2 + if coarsest { 0 } else { 4 };
            for &w in &cfg.depth_refiner_widths {
                total += conv(c, w);
                c = w;
            }
            total += conv(c, 5);
        }
        if cfg.task != Task::DepthOnly {
            let mut c = cfg.filters_per_level[l - 1] + if coarsest { 0 } else { cfg.num_classes + 4 };
            for &w in &cfg.semantic_refiner_widths {
                total += conv(c, w);
                c = w;
            }
            total += conv(c, 4 + cfg.num_classes);
        }
    }
    total
}

#[test]
fn parameter_count_matches_the_closed_form() {
    for cfg in [ArchConfig::default(), ArchConfig::tiny(4), ArchConfig::tiny(6)] {
        for task in [Task::Joint, Task::DepthOnly, Task::SemanticOnly] {
            let c = cfg.clone().with_task(task);
            assert_eq!(param_count(&c), closed_form_count(&c), "{task:?}");
            assert_eq!(ParamStore::<f32>::init(&c, 0).unwrap().scalar_count(), param_count(&c));
        }
    }
}

#[test]
fn joint_model_shares_exactly_the_encoder() {
    let cfg = ArchConfig::default();
    let joint = param_count(&cfg);
    let depth = param_count(&cfg.clone().with_task(Task::DepthOnly));
    let seg = param_count(&cfg.clone().with_task(Task::SemanticOnly));
    assert_eq!(joint, depth + seg - encoder_param_count(&cfg));
    assert!(joint < depth + seg);
}

fn random_frames(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<Tensor<f32>> {
    (0..n).map(|_| Tensor::from_fn([1, 3, size, size], |_| rng.random_range(0.0..1.0))).collect()
}

#[test]
fn cold_start_and_random_inputs_stay_finite() {
    let cfg = ArchConfig { num_classes: 7, ..ArchConfig::tiny(4) };
    let intr = CameraIntrinsics::from_fov(32, 32, 90.0).unwrap();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::<f32>::init(&cfg, seed).unwrap();
        let frames = random_frames(&mut rng, 3, 32);
        let moving = MotionTransform::new(
            Rotation3::from_euler_angles(rng.random_range(-0.05..0.05), 0.0, 0.02).into_inner(),
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.1),
        )
        .unwrap();
        let motions = if seed % 2 == 0 { [MotionTransform::identity(); 2] } else { [moving; 2] };
        let out = cosemdepth_forward(&cfg, &params, &frames, &motions, &intr).unwrap();
        let depth = out.depth.unwrap();
        assert!(depth.values.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(out.parallax_levels.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
        let probs = out.seg_probs.unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
        assert_eq!(out.seg_levels.len(), cfg.num_levels);
        assert_eq!(out.seg_levels[0].dim(), (16, 16, cfg.num_classes));
    }
}

#[test]
fn forward_is_deterministic_and_single_frame_is_semantic_only() {
    let cfg = ArchConfig { num_classes: 7, ..ArchConfig::tiny(4) };
    let intr = CameraIntrinsics::from_fov(32, 32, 90.0).unwrap();
    let params = ParamStore::<f32>::init(&cfg, 3).unwrap();
    let frames = random_frames(&mut ChaCha8Rng::seed_from_u64(1), 2, 32);
    let m = [MotionTransform::new(nalgebra::Matrix3::identity(), Vector3::new(0.5, 0.0, 0.0)).unwrap()];
    let a = cosemdepth_forward(&cfg, &params, &frames, &m, &intr).unwrap();
    let b = cosemdepth_forward(&cfg, &params, &frames, &m, &intr).unwrap();
    assert_eq!(a.depth, b.depth);
    assert_eq!(a.seg_logits, b.seg_logits);

    let single = cosemdepth_forward(&cfg, &params, &frames[..1], &[], &intr).unwrap();
    assert!(single.depth.is_none());
    assert!(single.seg_probs.is_some());
    assert!(matches!(
        cosemdepth_forward(&cfg, &params, &frames, &[], &intr),
        Err(Error::Contract(_))
    ));
}

#[test]
fn bad_input_size_is_rejected_before_compute() {
    let cfg = ArchConfig::tiny(4);
    let params = ParamStore::<f32>::init(&cfg, 0).unwrap();
    let intr = CameraIntrinsics::from_fov(40, 40, 90.0).unwrap();
    let frames = random_frames(&mut ChaCha8Rng::seed_from_u64(0), 1, 40);
    let err = cosemdepth_forward(&cfg, &params, &frames, &[], &intr).unwrap_err();
    assert!(err.to_string().contains("16"), "{err}");
}

#[test]
fn checkpoint_file_round_trip_preserves_outputs() {
    let cfg = ArchConfig { num_classes: 7, ..ArchConfig::tiny(4) };
    let ckpt = Checkpoint {
        arch: cfg.clone(),
        params: ParamStore::<f32>::init(&cfg, 9).unwrap(),
        epoch: 4,
        metrics: StoredMetrics { rmse: Some(1.5), miou: Some(0.25), ..Default::default() },
        fingerprint: fingerprint(&cfg),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.params_hash(), ckpt.params_hash());

    let intr = CameraIntrinsics::from_fov(32, 32, 90.0).unwrap();
    let frames = random_frames(&mut ChaCha8Rng::seed_from_u64(2), 2, 32);
    let m = [MotionTransform::new(nalgebra::Matrix3::identity(), Vector3::new(0.0, 0.7, 0.0)).unwrap()];
    let a = cosemdepth_forward(&ckpt.arch, &ckpt.params, &frames, &m, &intr).unwrap();
    let b = cosemdepth_forward(&back.arch, &back.params, &frames, &m, &intr).unwrap();
    assert_eq!(a.depth, b.depth);
    assert_eq!(a.seg_probs, b.seg_probs);

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes.truncate(last);
    assert!(Checkpoint::from_bytes(&bytes).is_err());
}

#[test]
fn single_task_losses_match_finite_differences() {
    let recipe = DatasetRecipe { width: 32, height: 32, frame_count: 3, ..DatasetRecipe::toy() };
    let trajs = recipe.generate().unwrap();
    let batch = collate::<f64>(&[load_window(&trajs, (0, 0), 3).unwrap()]).unwrap();
    for task in [Task::DepthOnly, Task::SemanticOnly] {
        let arch = ArchConfig { num_classes: aeroscene_core::NUM_CLASSES, initial_parallax: 0.3, ..ArchConfig::tiny(4) }.with_task(task);
        let params = ParamStore::<f64>::init(&arch, 1).unwrap();
        let probes = check_loss_gradient(&arch, &params, &batch, 0.15, SkyHandling::Include, 10, 1e-4, 2).unwrap();
        for p in probes {
            assert!(p.relative_error() <= 1e-4, "{task:?} {p:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn parameter_identity_holds_for_random_widths(
        levels in 4usize..=6,
        base in 2usize..12,
        radius in 1usize..=3,
        candidates in prop::sample::select(vec![3usize, 5, 7]),
        classes in 2usize..10,
    ) {
        let cfg = ArchConfig {
            num_levels: levels,
            filters_per_level: (0..levels).map(|l| base * (l + 1)).collect(),
            split_k_per_level: vec![1; levels],
            sncv_radius: radius,
            pscv_candidates: candidates,
            num_classes: classes,
            ..ArchConfig::tiny(levels)
        };
        let joint = param_count(&cfg);
        let depth = param_count(&cfg.clone().with_task(Task::DepthOnly));
        let seg = param_count(&cfg.clone().with_task(Task::SemanticOnly));
        prop_assert_eq!(joint, depth + seg - encoder_param_count(&cfg));
        prop_assert_eq!(joint, closed_form_count(&cfg));
    }
}
