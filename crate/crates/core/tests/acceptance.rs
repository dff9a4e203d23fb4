//! Acceptance gate: one line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use aeroscene_core::evalkit::{depth_metrics, seg_metrics};
use aeroscene_core::geometry::{
    depth_from_parallax_with, parallax_from_depth_with, point_cloud_from_maps, project, relative_transform,
    warp_map, CameraIntrinsics, DenominatorReading, DepthMap, Interpolation, MotionTransform, ParallaxMap,
    PixelAttributes, Pose,
};
use aeroscene_core::net::cost::{sncv, split_normalize};
use aeroscene_core::net::geo_ops::{pscv, LevelGeometry};
use aeroscene_core::net::params::{encoder_param_count, param_count};
use aeroscene_core::net::{ArchConfig, ParamStore, Task, Tensor};
use aeroscene_core::objectives::{depth_loss, semantic_loss, SkyHandling};
use aeroscene_core::synthgen::{
    default_depth_scale, gt_consistency, median_filter, read_dataset, write_dataset, DatasetRecipe, Trajectory,
};
use aeroscene_core::trainer::data::{collate, load_window};
use aeroscene_core::trainer::{check_loss_gradient, evaluate, train, CapProtocol, TrainConfig, TrainOutcome};
use aeroscene_core::Class;
use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn run(id: u8, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = v.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" / limit {:.0} s", l.as_secs_f64()));
    println!(
        "[{}] criterion {id} {name}: {} ({:.1} s{budget})",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn random_motion(rng: &mut ChaCha8Rng, translation: f64) -> MotionTransform {
    let r = Rotation3::from_euler_angles(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
    );
    let t = Vector3::new(
        rng.random_range(-translation..translation),
        rng.random_range(-translation..translation),
        rng.random_range(-translation..translation) * 0.3,
    );
    MotionTransform::new(r.into_inner(), t).unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let q = UnitQuaternion::from_euler_angles(
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.0..3.0),
    );
    let p = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..80.0));
    Pose::new(p, *q.quaternion()).unwrap()
}

fn random_intrinsics(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CameraIntrinsics {
    CameraIntrinsics::from_fov(w, h, rng.random_range(40.0..120.0)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// Loop oracles.

fn split_normalize_oracle(x: &Tensor<f64>, k: usize) -> Vec<f64> {
    let [_, c, h, w] = x.dims();
    let g = c / k;
    let mut out = vec![0.0; c * h * w];
    for j in 0..h {
        for i in 0..w {
            for grp in 0..k {
                let mut ss = 0.0;
                for ch in grp * g..(grp + 1) * g {
                    ss += x.at(0, ch, j, i) * x.at(0, ch, j, i);
                }
                let norm = ss.sqrt().max(1e-8);
                for ch in grp * g..(grp + 1) * g {
                    out[(ch * h + j) * w + i] = x.at(0, ch, j, i) / norm;
                }
            }
        }
    }
    out
}

fn sncv_oracle(x: &Tensor<f64>, r: usize) -> Vec<f64> {
    let [_, c, h, w] = x.dims();
    let side = 2 * r + 1;
    let mut out = vec![0.0; side * side * h * w];
    for dy in -(r as isize)..=r as isize {
        for dx in -(r as isize)..=r as isize {
            let o = (dy + r as isize) as usize * side + (dx + r as isize) as usize;
            for j in 0..h {
                for i in 0..w {
                    let (nj, ni) = (j as isize + dy, i as isize + dx);
                    if nj < 0 || ni < 0 || nj >= h as isize || ni >= w as isize {
                        continue;
                    }
                    let mut dot = 0.0;
                    for ch in 0..c {
                        dot += x.at(0, ch, j, i) * x.at(0, ch, nj as usize, ni as usize);
                    }
                    out[(o * h + j) * w + i] = dot / c as f64;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn pscv_oracle(
    f_t: &Tensor<f64>,
    f_prev: &Tensor<f64>,
    rho: &Array2<f64>,
    motion: &MotionTransform,
    intr: &CameraIntrinsics,
    max_depth: f64,
    candidates: usize,
    step: f64,
) -> Vec<f64> {
    let [_, c, h, w] = f_t.dims();
    let mut out = vec![0.0; candidates * h * w];
    for k in 0..candidates {
        let factor = step.powf(k as f64 - ((candidates - 1) / 2) as f64);
        let cand = ParallaxMap::new(rho.mapv(|v| v * factor)).unwrap();
        let (depth, _) =
            depth_from_parallax_with(&cand, motion, intr, max_depth, DenominatorReading::VirtualDepth).unwrap();
        for ch in 0..c {
            let src = Array2::from_shape_fn((h, w), |(j, i)| f_prev.at(0, ch, j, i));
            let warped = warp_map(&src, &depth, motion, intr, Interpolation::Bilinear).unwrap();
            for j in 0..h {
                for i in 0..w {
                    out[(k * h + j) * w + i] += f_t.at(0, ch, j, i) * warped.values[[j, i]] / c as f64;
                }
            }
        }
    }
    out
}

fn median_oracle(map: &Array2<f64>, window: usize) -> Array2<f64> {
    let (h, w) = map.dim();
    let lo = (window / 2) as isize;
    Array2::from_shape_fn((h, w), |(j, i)| {
        let mut vals = Vec::new();
        for dj in 0..window as isize {
            for di in 0..window as isize {
                let jj = (j as isize + dj - lo).clamp(0, h as isize - 1) as usize;
                let ii = (i as isize + di - lo).clamp(0, w as isize - 1) as usize;
                vals.push(map[[jj, ii]]);
            }
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[(vals.len() - 1) / 2]
    })
}

fn nearest_down<T: Copy>(map: &Array2<T>, f: usize) -> Array2<T> {
    let (h, w) = map.dim();
    Array2::from_shape_fn((h / f, w / f), |(j, i)| map[[j * f + f / 2, i * f + f / 2]])
}

fn depth_loss_oracle(preds: &[Array2<f64>], gt: &Array2<f64>, sky_at: Option<f64>) -> f64 {
    let mut total = 0.0;
    for (l, p) in preds.iter().enumerate() {
        let g = nearest_down(gt, gt.dim().0 / p.dim().0);
        let (mut sum, mut n) = (0.0, 0usize);
        for (&a, &b) in p.iter().zip(g.iter()) {
            if sky_at.is_some_and(|m| b >= m) {
                continue;
            }
            sum += (a.ln() - b.ln()).abs();
            n += 1;
        }
        if n > 0 {
            total += 2f64.powi(l as i32 + 2) * sum / n as f64;
        }
    }
    total
}

fn semantic_loss_oracle(logits: &[Array3<f64>], gt: &Array2<u8>) -> f64 {
    let mut total = 0.0;
    for lg in logits {
        let (h, w, c) = lg.dim();
        let g = nearest_down(gt, gt.dim().0 / h);
        let mut sum = 0.0;
        for j in 0..h {
            for i in 0..w {
                let m = (0..c).map(|k| lg[[j, i, k]]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..c).map(|k| (lg[[j, i, k]] - m).exp()).sum();
                sum += m + z.ln() - lg[[j, i, g[[j, i]] as usize]];
            }
        }
        total += sum / (h * w) as f64;
    }
    total
}

fn depth_metrics_oracle(pred: &Array2<f64>, gt: &Array2<f64>, cap: f64) -> [f64; 5] {
    let n = pred.len() as f64;
    let (mut sq, mut rel, mut d) = (0.0, 0.0, [0.0; 3]);
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let (p, g) = (p.min(cap), g.min(cap));
        sq += (p - g).powi(2);
        rel += (p - g).abs() / g;
        let ratio = if p > g { p / g } else { g / p };
        for (k, t) in [1.25f64, 1.5625, 1.953125].iter().enumerate() {
            if ratio < *t {
                d[k] += 1.0;
            }
        }
    }
    [(sq / n).sqrt(), rel / n, d[0] / n, d[1] / n, d[2] / n]
}

fn seg_metrics_oracle(pred: &Array2<u8>, gt: &Array2<u8>, classes: usize) -> (Vec<Option<f64>>, f64, f64) {
    let mut ious = Vec::new();
    for c in 0..classes as u8 {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        ious.push((tp + fp + fn_ > 0).then(|| tp as f64 / (tp + fp + fn_) as f64));
    }
    let present: Vec<f64> = ious.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    let acc = pred.iter().zip(gt.iter()).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64;
    (ious, miou, acc)
}

fn criterion_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = 100;
    let mut worst = [0.0f64; 8];

    for _ in 0..cases {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let k = rng.random_range(1..=4);
        let c = k * rng.random_range(1..=2);
        let x = random_tensor(&mut rng, [1, c, h, w]);
        worst[0] = worst[0].max(max_diff(split_normalize(&x, k).unwrap().data(), &split_normalize_oracle(&x, k)));

        let r = rng.random_range(1..=3);
        worst[1] = worst[1].max(max_diff(sncv(&x, r).data(), &sncv_oracle(&x, r)));
    }

    for _ in 0..cases {
        let (h, w) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let c = rng.random_range(1..=8);
        let intr = random_intrinsics(&mut rng, w, h);
        let motion = random_motion(&mut rng, 0.5);
        let f_t = random_tensor(&mut rng, [1, c, h, w]);
        let f_prev = random_tensor(&mut rng, [1, c, h, w]);
        let rho = Array2::from_shape_fn((h, w), |_| rng.random_range(0.05..1.5));
        let candidates = [3, 5][rng.random_range(0..2)];
        let geo = LevelGeometry::new(&[motion], &[intr], 200.0, DenominatorReading::VirtualDepth);
        let rho_t = Tensor::from_vec([1, 1, h, w], rho.iter().copied().collect());
        let (vol, _) = pscv(&f_t, &f_prev, &rho_t, &geo, candidates, 1.25);
        let oracle = pscv_oracle(&f_t, &f_prev, &rho, &motion, &intr, 200.0, candidates, 1.25);
        worst[2] = worst[2].max(max_diff(vol.data(), &oracle));
    }

    for _ in 0..cases {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let map = Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..100.0));
        let window = rng.random_range(1..=10);
        let got = median_filter(&map, window).unwrap();
        worst[3] = worst[3].max(max_diff(got.as_slice().unwrap(), median_oracle(&map, window).as_slice().unwrap()));
    }

    for case in 0..cases {
        let levels = rng.random_range(1..=3);
        let size = 8;
        let gt = Array2::from_shape_fn((size, size), |_| {
            if rng.random_bool(0.1) { 200.0 } else { rng.random_range(1.0..150.0) }
        });
        let preds: Vec<Array2<f64>> = (0..levels)
            .rev()
            .map(|i| {
                let s = size >> i;
                Array2::from_shape_fn((s, s), |_| rng.random_range(0.5..200.0))
            })
            .collect();
        let (sky, sky_at) = if case % 2 == 0 {
            (SkyHandling::Include, None)
        } else {
            (SkyHandling::Exclude { max_depth: 200.0 }, Some(200.0))
        };
        let got = depth_loss(&preds, &gt, sky).unwrap().total;
        worst[4] = worst[4].max((got - depth_loss_oracle(&preds, &gt, sky_at)).abs());

        let classes = rng.random_range(2..=9);
        let labels = Array2::from_shape_fn((size, size), |_| rng.random_range(0..classes as u8));
        let logits: Vec<Array3<f64>> = (0..levels)
            .rev()
            .map(|i| {
                let s = size >> i;
                Array3::from_shape_fn((s, s, classes), |_| rng.random_range(-6.0..6.0))
            })
            .collect();
        let got = semantic_loss(&logits, &labels).unwrap().total;
        worst[5] = worst[5].max((got - semantic_loss_oracle(&logits, &labels)).abs());
    }

    for _ in 0..cases {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let gt = Array2::from_shape_fn((h, w), |_| rng.random_range(0.5..120.0));
        let pred = Array2::from_shape_fn((h, w), |(j, i)| {
            if rng.random_bool(0.3) { gt[[j, i]] * rng.random_range(0.7..1.4) } else { rng.random_range(0.5..120.0) }
        });
        let cap = rng.random_range(20.0..200.0);
        let m = depth_metrics(&DepthMap::new(pred.clone(), 200.0).unwrap(), &DepthMap::new(gt.clone(), 200.0).unwrap(), cap)
            .unwrap();
        let o = depth_metrics_oracle(&pred, &gt, cap);
        worst[6] = worst[6].max(max_diff(&[m.rmse, m.abs_rel, m.delta1, m.delta2, m.delta3], &o));

        let classes = rng.random_range(2..=9);
        let p = Array2::from_shape_fn((h, w), |_| rng.random_range(0..classes as u8));
        let g = Array2::from_shape_fn((h, w), |_| rng.random_range(0..classes as u8));
        let s = seg_metrics(&p, &g, classes).unwrap();
        let (ious, miou, acc) = seg_metrics_oracle(&p, &g, classes);
        let mut err = (s.miou - miou).abs().max((s.pixel_accuracy - acc).abs());
        for (a, b) in s.per_class_iou.iter().zip(&ious) {
            err = err.max(match (a, b) {
                (Some(a), Some(b)) => (a - b).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            });
        }
        worst[7] = worst[7].max(err);
    }

    let tol = [1e-6, 1e-6, 1e-6, 0.0, 1e-9, 1e-9, 1e-9, 1e-9];
    let names = ["split_normalize", "sncv", "pscv", "median_filter", "depth_loss", "semantic_loss", "depth_metrics", "seg_metrics"];
    let pass = worst.iter().zip(&tol).all(|(w, t)| w <= t);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, format!("{cases} cases each, max abs error: {detail}"))
}

fn criterion_geometry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cases = 1000;
    let mut identity_ok = true;
    let (mut round_trip, mut round_trip_pixels) = (0.0f64, 0usize);
    let (mut compose, mut cloud) = (0.0f64, 0.0f64);

    for _ in 0..cases {
        let (h, w) = (rng.random_range(2..=12), rng.random_range(2..=12));
        let intr = random_intrinsics(&mut rng, w, h);
        let src = Array2::from_shape_fn((h, w), |_| rng.random_range(-10.0..10.0));
        let depth = DepthMap::new(Array2::from_shape_fn((h, w), |_| rng.random_range(0.5..150.0)), 200.0).unwrap();
        let warped = warp_map(&src, &depth, &MotionTransform::identity(), &intr, Interpolation::Bilinear).unwrap();
        identity_ok &= warped.values == src && warped.valid.iter().all(|&v| v);

        let motion = random_motion(&mut rng, 2.0);
        for reading in [DenominatorReading::VirtualDepth, DenominatorReading::DepthTimesVirtualDepth] {
            let (rho, valid) = parallax_from_depth_with(&depth, &motion, &intr, reading).unwrap();
            let (back, back_valid) = depth_from_parallax_with(&rho, &motion, &intr, 200.0, reading).unwrap();
            for (((&z, &z2), &v), &bv) in depth.values.iter().zip(back.values.iter()).zip(valid.iter()).zip(back_valid.iter()) {
                if v && bv {
                    round_trip = round_trip.max((z2 - z).abs() / z);
                    round_trip_pixels += 1;
                }
            }
        }

        let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
        let ab = relative_transform(&a, &b).unwrap();
        let bc = relative_transform(&b, &c).unwrap();
        let ac = relative_transform(&a, &c).unwrap();
        let composed = ab.compose(&bc);
        let x = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(1.0..50.0));
        let world = c.rotation() * x + c.position;
        let in_a = a.rotation().transpose() * (world - a.position);
        compose = compose
            .max((composed.rotation - ac.rotation).amax())
            .max((composed.translation - ac.translation).amax())
            .max((composed.apply(&x) - in_a).amax() / in_a.norm().max(1.0));

        let labels = Array2::from_shape_fn((h, w), |_| rng.random_range(0..7u8));
        let pc = point_cloud_from_maps(&depth, PixelAttributes::Labels(&labels), &intr, f64::INFINITY).unwrap();
        if pc.len() != h * w {
            cloud = f64::INFINITY;
        }
        for (k, p) in pc.points.iter().enumerate() {
            let (qi, qj) = project(p, &intr).unwrap();
            let (i, j) = ((k % w) as f64, (k / w) as f64);
            cloud = cloud.max((qi - i).hypot(qj - j));
        }
    }
    let pass = identity_ok && round_trip <= 1e-6 && round_trip_pixels > cases && compose <= 1e-6 && cloud <= 0.5;
    verdict(
        pass,
        format!(
            "{cases} cases: identity warp exact {identity_ok}, parallax round trip rel {round_trip:.1e} over {round_trip_pixels} px, \
             composition {compose:.1e}, cloud reprojection {cloud:.1e} px"
        ),
    )
}

fn gradient_arch() -> ArchConfig {
    ArchConfig {
        num_levels: 4,
        filters_per_level: vec![16, 32, 64, 96],
        split_k_per_level: vec![1, 2, 2, 4],
        depth_refiner_widths: vec![16; 6],
        semantic_refiner_widths: vec![16; 4],
        initial_parallax: 0.3,
        ..ArchConfig::default()
    }
}

fn criterion_gradient() -> Verdict {
    let recipe = DatasetRecipe { width: 48, height: 48, frame_count: 4, ..DatasetRecipe::toy() };
    let trajs = recipe.generate().unwrap();
    let arch = gradient_arch();
    let batch = collate::<f64>(&[load_window(&trajs, (0, 0), arch.sequence_length).unwrap()]).unwrap();
    let params = ParamStore::<f64>::init(&arch, 3).unwrap();
    let probes = check_loss_gradient(&arch, &params, &batch, 0.15, SkyHandling::Include, 20, 1e-4, 5).unwrap();
    let worst = probes.iter().map(|p| p.relative_error()).fold(0.0, f64::max);
    let nonzero = probes.iter().filter(|p| p.analytic != 0.0).count();
    verdict(
        worst <= 1e-4 && probes.len() == 20,
        format!("20 parameters at 48x48, 4 levels, f64: max relative error {worst:.2e} ({nonzero} non-zero gradients)"),
    )
}

fn criterion_structure() -> Verdict {
    let mut configs = vec![ArchConfig::default(), ArchConfig::tiny(4), ArchConfig::tiny(6), gradient_arch()];
    configs.push(ArchConfig { sequence_length: 4, pscv_candidates: 7, sncv_radius: 2, ..ArchConfig::default() });
    let mut lines = Vec::new();
    let mut pass = true;
    for cfg in &configs {
        let count = |task: Task| {
            let c = cfg.clone().with_task(task);
            let stored = ParamStore::<f32>::init(&c, 0).unwrap().scalar_count();
            (param_count(&c), stored)
        };
        let (joint, joint_stored) = count(Task::Joint);
        let (depth, depth_stored) = count(Task::DepthOnly);
        let (seg, seg_stored) = count(Task::SemanticOnly);
        let enc = encoder_param_count(cfg);
        pass &= joint == depth + seg - enc && joint == joint_stored && depth == depth_stored && seg == seg_stored;
        pass &= joint < depth + seg;
        lines.push(format!("{joint} = {depth} + {seg} - {enc}"));
    }
    verdict(pass, lines.join("; "))
}

struct OverfitRun {
    outcome: TrainOutcome,
    accuracy: f64,
    delta1: f64,
    median_abs_rel: f64,
    elapsed: Duration,
}

fn overfit_run(trajs: &[Trajectory]) -> OverfitRun {
    let start = Instant::now();
    let cfg = TrainConfig::toy_overfit(1);
    let outcome = train(&cfg, trajs, None, trajs, None).unwrap();
    let eval = evaluate(&outcome.best, trajs, CapProtocol::Cap80, 0).unwrap();
    OverfitRun {
        accuracy: eval.seg.as_ref().map_or(0.0, |s| s.pixel_accuracy),
        delta1: eval.depth.map_or(0.0, |d| d.delta1),
        median_abs_rel: eval.median_abs_rel.unwrap_or(f64::INFINITY),
        outcome,
        elapsed: start.elapsed(),
    }
}

fn criterion_overfit(run: &OverfitRun) -> Verdict {
    let pass = run.accuracy >= 0.90
        && run.delta1 >= 0.85
        && run.median_abs_rel <= 0.10
        && run.outcome.epochs.len() <= 501
        && run.elapsed <= Duration::from_secs(45 * 60);
    verdict(
        pass,
        format!(
            "{} epochs ({:?}), best epoch {}: pixel accuracy {:.4}, delta1 {:.4}, median AbsRel {:.4}, train time {:.0} s",
            run.outcome.epochs.len() - 1,
            run.outcome.stop,
            run.outcome.best.epoch,
            run.accuracy,
            run.delta1,
            run.median_abs_rel,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_determinism(a: &TrainOutcome, b: &TrainOutcome) -> Verdict {
    let curve = |o: &TrainOutcome| o.steps.iter().map(|s| s.total.to_bits()).collect::<Vec<_>>();
    let same_curve = curve(a) == curve(b);
    let (ha, hb) = (a.best.params_hash(), b.best.params_hash());
    verdict(
        same_curve && ha == hb && !a.steps.is_empty(),
        format!("{} steps, identical loss curves {same_curve}, best hash {} vs {}", a.steps.len(), &ha[..12], &hb[..12]),
    )
}

fn criterion_closed_forms() -> Verdict {
    let gt = Array2::from_shape_fn((6, 5), |(j, i)| 2.0 + j as f64 * 3.0 + i as f64 * 0.7);
    let m = depth_metrics(
        &DepthMap::new(gt.mapv(|v| 1.3 * v), 200.0).unwrap(),
        &DepthMap::new(gt, 200.0).unwrap(),
        200.0,
    )
    .unwrap();
    let delta_ok = m.delta1.abs() <= 1e-9 && (m.delta2 - 1.0).abs() <= 1e-9 && (m.abs_rel - 0.3).abs() <= 1e-9;

    let gt = Array2::from_shape_fn((4, 8), |(_, i)| u8::from(i < 4));
    let pred = Array2::from_shape_fn((4, 8), |(_, i)| u8::from((2..6).contains(&i)));
    let iou = seg_metrics(&pred, &gt, 2).unwrap().per_class_iou[1].unwrap();
    let iou_ok = (iou - 1.0 / 3.0).abs() <= 1e-9;

    let labels = Array2::from_shape_fn((8, 8), |(j, i)| ((j + i) % 7) as u8);
    let logits: Vec<Array3<f64>> = [2, 4, 8].iter().map(|&s| Array3::from_elem((s, s, 7), 0.37)).collect();
    let terms = semantic_loss(&logits, &labels).unwrap();
    let ce_ok = terms.per_level.iter().all(|t| (t - 7f64.ln()).abs() <= 1e-9);

    verdict(
        delta_ok && iou_ok && ce_ok,
        format!(
            "1.3x: delta1 {} delta2 {}; half-overlap IoU {iou:.12}; uniform CE per level {:.12} (ln 7 = {:.12})",
            m.delta1,
            m.delta2,
            terms.per_level[0],
            7f64.ln()
        ),
    )
}

fn criterion_dataset(trajs: &[Trajectory]) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), trajs).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    let mut exact = back.len() == trajs.len();
    let mut depth_err = 0.0f64;
    let mut half_step = 0.0;
    let sky = Class::Sky as u8;
    for (a, b) in trajs.iter().zip(&back) {
        exact &= a.frames.len() == b.frames.len();
        half_step = default_depth_scale(a.frames[0].depth.max_depth) / 2.0;
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            exact &= fa.rgb == fb.rgb && fa.seg == fb.seg && fa.pose == fb.pose && fa.intrinsics == fb.intrinsics;
            for ((&za, &zb), &c) in fa.depth.values.iter().zip(fb.depth.values.iter()).zip(fa.seg.iter()) {
                depth_err = depth_err.max(match (c == sky, za == zb) {
                    (true, true) => 0.0,
                    (true, false) => f64::INFINITY,
                    _ => (za - zb).abs(),
                });
            }
        }
    }
    let (mut agree, mut counted) = (0.0, 0usize);
    for t in &back {
        for pair in t.frames.windows(2) {
            let (a, n) = gt_consistency(&pair[0], &pair[1], 0.02).unwrap();
            agree += a * n as f64;
            counted += n;
        }
    }
    let consistency = agree / counted.max(1) as f64;
    verdict(
        exact && depth_err <= half_step && consistency >= 0.9,
        format!(
            "rgb/seg/poses bit-identical {exact}; depth error {depth_err:.2e} m (half step {half_step:.2e}); \
             warping consistency {consistency:.4} over {counted} px"
        ),
    )
}

fn main() {
    let mut results = Vec::new();
    results.push(run(1, "oracle equivalence", Some(Duration::from_secs(120)), criterion_oracles));
    results.push(run(2, "geometry suite", Some(Duration::from_secs(60)), criterion_geometry));
    results.push(run(3, "gradient check", Some(Duration::from_secs(300)), criterion_gradient));
    results.push(run(4, "structural identity", None, criterion_structure));

    let toy = DatasetRecipe::toy().generate().unwrap();
    let first = overfit_run(&toy);
    results.push(run(5, "end-to-end overfit", None, || criterion_overfit(&first)));
    let second = overfit_run(&toy);
    results.push(run(6, "determinism", None, || criterion_determinism(&first.outcome, &second.outcome)));

    results.push(run(7, "metric closed forms", None, criterion_closed_forms));
    results.push(run(8, "dataset format", None, || criterion_dataset(&toy)));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
