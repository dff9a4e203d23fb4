use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use aeroscene_bench::toy_trajectory;
use aeroscene_core::net::{ArchConfig, ParamStore, Tape};
use aeroscene_core::objectives::SkyHandling;
use aeroscene_core::synthgen::render_frame;
use aeroscene_core::synthgen::{DatasetRecipe, SceneSpec};
use aeroscene_core::trainer::data::{collate, load_window};
use aeroscene_core::trainer::{predict_windows, window_loss, TrainConfig};

fn bench_render(c: &mut Criterion) {
    let recipe = DatasetRecipe::toy();
    let scene = SceneSpec::procedural(recipe.seed, recipe.scene, recipe.half_extent);
    let traj = toy_trajectory(2);
    let frame = &traj.frames[0];
    c.bench_function("render_frame_96px", |b| {
        b.iter(|| black_box(render_frame(&scene, &frame.pose, &frame.intrinsics, recipe.max_depth).unwrap()))
    });
}

/// Per-frame inference latency of the default network on 96x96 frames.
fn bench_forward(c: &mut Criterion) {
    let traj = toy_trajectory(3);
    let arch = ArchConfig::default();
    let params = ParamStore::<f32>::init(&arch, 0).unwrap();
    c.bench_function("forward_default_96px_3frames", |b| {
        b.iter(|| black_box(predict_windows(&arch, &params, &[&traj.frames[..]]).unwrap()))
    });
}

/// One training step (forward, loss, backward) on a batch of 3 windows.
fn bench_train_step(c: &mut Criterion) {
    let traj = toy_trajectory(5);
    let trajs = vec![traj];
    let cfg = TrainConfig::toy_overfit(0);
    let params = ParamStore::<f32>::init(&cfg.arch, 0).unwrap();
    let windows: Vec<_> = (0..3).map(|s| load_window(&trajs, (0, s), 3).unwrap()).collect();
    let batch = collate::<f32>(&windows).unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.bench_function("toy_overfit_batch3_96px", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let (loss, _) = window_loss(&mut tape, &cfg.arch, &bound, &batch, cfg.loss_weight, SkyHandling::Include).unwrap();
            black_box(tape.backward(loss));
        })
    });
    group.finish();
}

criterion_group!(pipeline, bench_render, bench_forward, bench_train_step);
criterion_main!(pipeline);
