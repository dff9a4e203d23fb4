use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aeroscene_core::evalkit::{read_summary, SummaryRecord};
use aeroscene_core::net::ArchConfig;
use aeroscene_core::synthgen::{read_dataset, DatasetRecipe};
use aeroscene_core::trainer::{AugmentConfig, TrainConfig};
use aeroscene_core::NUM_CLASSES;

fn aeroscene(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeroscene"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("AEROSCENE_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = aeroscene(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = aeroscene(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let diagnostics: Vec<_> = stderr.lines().filter(|l| l.starts_with("error:")).collect();
    assert_eq!(diagnostics.len(), 1, "{stderr}");
    diagnostics[0].to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_recipe(frames: usize) -> DatasetRecipe {
    DatasetRecipe { width: 32, height: 32, frame_count: frames, ..DatasetRecipe::toy() }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_path_buf()
}

#[test]
fn minimal_generate_writes_two_frames_and_refuses_a_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_json(&tmp.path().join("scene.json"), &small_recipe(8));
    let out = tmp.path().join("data");
    let args = ["generate", "--scene", s(&scene), "--frames", "2", "--seed", "3", "--view", "nadir", "--out", s(&out)];
    ok(&args);

    let traj = out.join("trajectory_000");
    for sub in ["rgb", "depth", "seg"] {
        let mut names: Vec<_> = fs::read_dir(traj.join(sub)).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, ["000000.png", "000001.png"], "{sub}");
    }
    let poses = fs::read_to_string(traj.join("poses.csv")).unwrap();
    assert_eq!(poses.lines().count(), 1 + 2);

    let expected = DatasetRecipe { frame_count: 2, seed: 3, ..small_recipe(8) }.generate().unwrap();
    let back = read_dataset(&out).unwrap();
    assert_eq!(back.len(), expected.len());
    for (a, b) in back[0].frames.iter().zip(&expected[0].frames) {
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.seg, b.seg);
        assert_eq!(a.pose, b.pose);
        let step = 0.5 * b.depth.max_depth / 65535.0;
        for (x, y) in a.depth.values.iter().zip(b.depth.values.iter()) {
            assert!((x - y).abs() <= step + 1e-12);
        }
    }

    let err = fails_with(&args, 1);
    assert!(err.contains("--overwrite"), "{err}");
    let mut again = args.to_vec();
    again.push("--overwrite");
    ok(&again);
    let entries: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.iter().filter(|n| *n == "manifest.json").count(), 1);
}

#[test]
fn generate_without_out_uses_the_environment_root() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = write_json(&tmp.path().join("scene.json"), &small_recipe(2));
    let run = |root: &Path| {
        Command::new(env!("CARGO_BIN_EXE_aeroscene"))
            .args(["generate", "--scene", s(&scene)])
            .env("AEROSCENE_OUT_ROOT", root)
            .output()
            .unwrap()
    };
    let first = run(tmp.path());
    assert!(first.status.success());
    let dir = PathBuf::from(String::from_utf8(first.stdout).unwrap().trim());
    assert!(dir.starts_with(tmp.path()));
    assert!(dir.join("manifest.json").exists());
    assert_eq!(run(tmp.path()).status.code(), Some(1));
}

#[test]
fn help_lists_every_flag_and_unknown_flags_fail_fast() {
    let help = ok(&["train", "--help"]);
    for flag in ["--data", "--ratio", "--val", "--epochs", "--batch", "--lr", "--loss-weight", "--seed", "--out", "--overwrite"] {
        assert!(help.contains(flag), "{flag}");
    }
    let help = ok(&["generate", "--help"]);
    for flag in ["--scene", "--frames", "--seed", "--view", "--out"] {
        assert!(help.contains(flag), "{flag}");
    }
    let err = fails_with(&["generate", "--frmes", "2"], 1);
    assert!(err.contains("--frmes"), "{err}");
    fails_with(&["eval", "--ckpt", "x", "--data", "y", "--cap", "120"], 1);
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let err = fails_with(&["eval", "--ckpt", "/nonexistent.ckpt", "--data", "/nonexistent", "--out", s(&out)], 1);
    assert!(err.contains("nonexistent"), "{err}");
}

fn markdown_row<'a>(md: &'a str, run_id: &str) -> &'a str {
    md.lines().find(|l| l.starts_with(&format!("| {run_id} |"))).expect("run row")
}

#[test]
fn train_eval_predict_reconstruct_report_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |name: &str| tmp.path().join(name);
    let scene = write_json(&t("scene.json"), &small_recipe(5));
    ok(&["generate", "--scene", s(&scene), "--out", s(&t("data"))]);

    let config = TrainConfig {
        arch: ArchConfig { num_classes: NUM_CLASSES, ..ArchConfig::tiny(4) },
        augment: AugmentConfig::off(),
        ..TrainConfig::default()
    };
    let config = write_json(&t("train.json"), &config);
    ok(&["train", "--data", s(&t("data")), "--config", s(&config), "--epochs", "1", "--lr", "1e-3", "--out", s(&t("train"))]);
    let ckpt = t("train").join("best.ckpt");
    assert!(ckpt.exists());
    let stored: TrainConfig = serde_json::from_str(&fs::read_to_string(t("train").join("config.json")).unwrap()).unwrap();
    assert_eq!(stored.epochs, 1);
    assert_eq!(stored.learning_rate, 1e-3);

    ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--cap", "80", "--run-id", "near", "--out", s(&t("eval80"))]);
    ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--cap", "200", "--run-id", "far", "--out", s(&t("eval200"))]);
    ok(&["report", "--runs", s(&t("eval80")), s(&t("eval200")), "--out", s(&t("report"))]);

    let near = read_summary(&t("eval80").join("summary.jsonl")).unwrap();
    let far = read_summary(&t("eval200").join("summary.jsonl")).unwrap();
    let combined = read_summary(&t("report").join("summary.jsonl")).unwrap();
    let mut expected: Vec<SummaryRecord> = near.clone();
    expected.extend(far.clone());
    assert_eq!(combined, expected);
    assert!(near.iter().any(|r| r.metric == "rmse") && near.iter().any(|r| r.metric == "miou"));
    let md = fs::read_to_string(t("report").join("summary.md")).unwrap();
    for (run, dir) in [("near", "eval80"), ("far", "eval200")] {
        let own = fs::read_to_string(t(dir).join("summary.md")).unwrap();
        assert_eq!(markdown_row(&md, run), markdown_row(&own, run));
    }
    let err = fails_with(&["report", "--runs", s(&t("eval80")), s(&t("eval80")), "--out", s(&t("dup"))], 1);
    assert!(err.contains("near"), "{err}");

    ok(&["predict", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "2", "--out", s(&t("pred"))]);
    for name in ["frame_000002_depth.png", "frame_000002_seg.png", "frame_000002_seg_color.png"] {
        let (w, h) = image::image_dimensions(t("pred").join(name)).unwrap();
        assert_eq!((w, h), (32, 32), "{name}");
    }
    ok(&["predict", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "0", "--out", s(&t("pred0"))]);
    assert!(t("pred0").join("frame_000000_seg.png").exists());
    assert!(!t("pred0").join("frame_000000_depth.png").exists());
    fails_with(&["predict", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "9", "--out", s(&t("pred9"))], 1);

    ok(&["reconstruct", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "2", "--trunc", "0.001", "--out", s(&t("empty"))]);
    let empty = fs::read_to_string(t("empty").join("cloud.txt")).unwrap();
    let header: Vec<_> = empty.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(header, ["count 0", "fields x y z label r g b"]);

    ok(&["reconstruct", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "2", "--out", s(&t("cloud"))]);
    let cloud = fs::read_to_string(t("cloud").join("cloud.txt")).unwrap();
    let mut lines = cloud.lines().filter(|l| !l.starts_with('#'));
    let count: usize = lines.next().unwrap().strip_prefix("count ").unwrap().parse().unwrap();
    assert_eq!(lines.next(), Some("fields x y z label r g b"));
    let points: Vec<Vec<f64>> = lines.map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(points.len(), count);
    assert!(count > 0);
    for p in &points {
        assert_eq!(p.len(), 7);
        assert!(p[2] > 0.0 && p[2] < 200.0);
        assert!(p[3] >= 0.0 && (p[3] as usize) < NUM_CLASSES);
    }
    fails_with(&["reconstruct", "--ckpt", s(&ckpt), "--data", s(&t("data")), "--frame", "0", "--out", s(&t("cloud0"))], 1);

    ok(&["replay", s(&t("eval80")), "--out", s(&t("replayed"))]);
    assert_eq!(
        fs::read_to_string(t("replayed").join("metrics.json")).unwrap(),
        fs::read_to_string(t("eval80").join("metrics.json")).unwrap()
    );
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(t("eval80").join("manifest.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(t("replayed").join("manifest.json")).unwrap()).unwrap();
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["revision"], b["revision"]);
}

#[test]
fn tampered_checkpoint_is_a_user_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("bogus.ckpt");
    fs::write(&bogus, b"not a checkpoint").unwrap();
    let scene = write_json(&tmp.path().join("scene.json"), &small_recipe(2));
    let data = tmp.path().join("data");
    ok(&["generate", "--scene", s(&scene), "--out", s(&data)]);
    fails_with(&["predict", "--ckpt", s(&bogus), "--data", s(&data), "--frame", "1", "--out", s(&tmp.path().join("p"))], 1);
}

#[test]
fn invalid_scene_file_is_reported_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    fs::write(&scene, "{\"seed\": 1,\n \"bogus\": true}").unwrap();
    let err = fails_with(&["generate", "--scene", s(&scene), "--out", s(&tmp.path().join("d"))], 1);
    assert!(err.contains("scene.json"), "{err}");
    let err = fails_with(&["generate", "--frames", "1", "--out", s(&tmp.path().join("d"))], 1);
    assert!(err.contains("2 frames"), "{err}");
}
