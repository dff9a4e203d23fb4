use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use aeroscene_bench::{camera, constant, features, frame_motion};
use aeroscene_core::geometry::{warp_map, DenominatorReading, DepthMap, Interpolation};
use aeroscene_core::net::ops::conv2d;
use aeroscene_core::net::{pscv, sncv, split_normalize, LevelGeometry, Tape};
use aeroscene_core::synthgen::median_filter;
use ndarray::Array2;

fn bench_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3");
    for &(size, cin, cout) in &[(48usize, 16usize, 16usize), (24, 64, 64), (12, 128, 128)] {
        let x = features([3, cin, size, size], 0.0);
        let w = features([cout, cin, 3, 3], 1.0);
        let b = constant([1, cout, 1, 1], 0.0);
        group.bench_function(BenchmarkId::from_parameter(format!("{size}px_{cin}to{cout}")), |bench| {
            bench.iter(|| {
                let mut tape = Tape::<f32>::new();
                let (x, w, b) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
                black_box(conv2d(&mut tape, x, w, b, 1));
            })
        });
    }
    group.finish();
}

fn bench_cost_volumes(c: &mut Criterion) {
    let x = features([3, 32, 24, 24], 0.0);
    c.bench_function("split_normalize_k4_24px", |b| b.iter(|| black_box(split_normalize(&x, 4).unwrap())));
    c.bench_function("sncv_r3_24px", |b| b.iter(|| black_box(sncv(&x, 3))));

    let prev = features([3, 32, 24, 24], 0.5);
    let rho = constant([3, 1, 24, 24], 0.8);
    let geo = LevelGeometry::new(&[frame_motion(); 3], &[camera(24); 3], 200.0, DenominatorReading::VirtualDepth);
    c.bench_function("pscv_5cand_24px", |b| b.iter(|| black_box(pscv(&x, &prev, &rho, &geo, 5, 1.25))));
}

fn bench_median(c: &mut Criterion) {
    let map = Array2::from_shape_fn((96, 96), |(j, i)| ((j * 31 + i * 17) % 9) as u8);
    c.bench_function("median_filter_w10_96px", |b| b.iter(|| black_box(median_filter(&map, 10).unwrap())));
}

fn bench_warp(c: &mut Criterion) {
    let intr = camera(96);
    let src = Array2::from_shape_fn((96, 96), |(j, i)| (j as f64 * 0.1).sin() + (i as f64 * 0.07).cos());
    let depth = DepthMap::new(Array2::from_shape_fn((96, 96), |(j, _)| 40.0 + j as f64 * 0.1), 200.0).unwrap();
    let motion = frame_motion();
    c.bench_function("warp_bilinear_96px", |b| {
        b.iter(|| black_box(warp_map(&src, &depth, &motion, &intr, Interpolation::Bilinear).unwrap()))
    });
}

criterion_group!(kernels, bench_conv, bench_cost_volumes, bench_median, bench_warp);
criterion_main!(kernels);
