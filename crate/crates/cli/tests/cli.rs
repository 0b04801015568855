use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hsisr_core::hsi_data::{load_cube, HsiCube};
use hsisr_core::metrics::evaluate;
use hsisr_core::trainer::{collapse_diagnostics, restore, TrainConfig, TrainData};

const TINY: &str = "pretrain_iters = 3
joint_iters = 6
eval_period = 3
batch_size = 4
hr_patch = 16
[data]
scene_size = 48
n_scenes = 2
";

fn hsisr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsisr"))
        .args(args)
        .current_dir(dir)
        .env_remove("HSISR_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn train_tiny(dir: &Path, run: &str, extra: &[&str]) {
    fs::write(dir.join("tiny.cfg"), TINY).unwrap();
    let mut args = vec!["train", "--preset", "desk-fast", "--config", "tiny.cfg", "--out", run];
    args.extend_from_slice(extra);
    ok(&hsisr(dir, &args));
}

fn manifest_value(path: &Path, key: &str) -> Option<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
}

fn csv_row(text: &str, name: &str) -> Vec<f64> {
    let line = text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
    line.split(',').skip(1).map(|v| v.parse().unwrap()).collect()
}

#[test]
fn synth_writes_a_deterministic_cube() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--width", "64", "--height", "64", "--bands", "16", "--seed", "7", "--out"];
    ok(&hsisr(dir.path(), &[&args[..], &["d/cube"]].concat()));
    ok(&hsisr(dir.path(), &[&args[..], &["e/cube"]].concat()));
    let d = dir.path().join("d");
    assert!(d.join("cube.hdr").exists());
    let a = fs::read(d.join("cube.raw")).unwrap();
    assert_eq!(a.len(), 64 * 64 * 16 * 4);
    assert_eq!(a, fs::read(dir.path().join("e/cube.raw")).unwrap());
    assert_eq!(manifest_value(&d.join("cube.manifest.txt"), "synth").as_deref(), Some("7"));
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsisr(dir.path(), &["synth", "--width", "8", "--height", "8", "--bands", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn degrade_scales_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&hsisr(
        p,
        &["synth", "--width", "384", "--height", "384", "--bands", "4", "--out", "hr"],
    ));
    ok(&hsisr(
        p,
        &["degrade", "--input", "hr", "--out", "lr8", "--scale", "8", "--snr", "inf"],
    ));
    let lr = load_cube(&p.join("lr8")).unwrap();
    assert_eq!((lr.height(), lr.width(), lr.bands()), (48, 48, 4));
    for out in ["n1", "n2"] {
        ok(&hsisr(
            p,
            &[
                "degrade", "--input", "hr", "--out", out, "--scale", "2", "--snr", "40", "--seed", "3",
            ],
        ));
    }
    assert_eq!(fs::read(p.join("n1.raw")).unwrap(), fs::read(p.join("n2.raw")).unwrap());
    let bad = hsisr(p, &["degrade", "--input", "hr", "--out", "x", "--scale", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = hsisr(p, &["degrade", "--input", "hr", "--out", "x", "--scale", "2", "--snr", "30"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_writes_the_run_layout_and_records_switches() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_tiny(p, "run", &[]);
    let curves = fs::read_to_string(p.join("run/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 6);
    for f in ["config.cfg", "ckpt-6/state.cfg", "diag/density.csv", "diag/overlap.txt"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }

    train_tiny(p, "m3", &["--ablation", "3"]);
    let m = p.join("m3/manifest.txt");
    assert_eq!(manifest_value(&m, "ablation.model").as_deref(), Some("3"));
    assert_eq!(manifest_value(&m, "ablation.sigmoid").as_deref(), Some("false"));
    assert_eq!(manifest_value(&m, "ablation.encoder").as_deref(), Some("false"));

    train_tiny(p, "js", &["--loss", "js"]);
    assert_eq!(manifest_value(&p.join("js/manifest.txt"), "loss_variant").as_deref(), Some("js"));
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = hsisr(p, &["train", "--config", "absent.cfg", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(p.join("scale.cfg"), "scale = 3\n").unwrap();
    let out = hsisr(p, &["train", "--config", "scale.cfg", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(p.join("boom.cfg"), format!("{TINY}[adam]\nlr = 1e300\n")).unwrap();
    let out = hsisr(p, &["train", "--preset", "desk-fast", "--config", "boom.cfg", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_reports_identity_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_tiny(p, "run", &[]);
    ok(&hsisr(p, &["eval", "--run", "run", "--oracle-identity", "--out", "id"]));
    let report = fs::read_to_string(p.join("id/report.txt")).unwrap();
    assert!(report.contains("psnr_infinite = true"));
    let row = csv_row(&fs::read_to_string(p.join("id/comparison.csv")).unwrap(), "identity");
    assert!(row[0].is_infinite());
    assert_eq!((row[2], row[3]), (0.0, 0.0));

    ok(&hsisr(p, &["eval", "--run", "run", "--baseline", "bicubic"]));
    let table = fs::read_to_string(p.join("run/eval/comparison.csv")).unwrap();
    let base = csv_row(&table, "bicubic");
    csv_row(&table, "model");
    let config = TrainConfig::from_text(&fs::read_to_string(p.join("run/config.cfg")).unwrap(), &TrainConfig::desk()).unwrap();
    let data = TrainData::synthetic(&config.data, config.bands, config.scale, config.hr_patch, config.seed).unwrap();
    let pairs: Vec<(&HsiCube, &HsiCube)> = data.test.iter().zip(&data.test_up).map(|(a, b)| (&a.hr, b)).collect();
    let lib = evaluate(&pairs, None, false).unwrap();
    for (got, want) in base.iter().zip([lib.psnr, lib.ssim, lib.sam, lib.sre]) {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    let out = hsisr(p, &["eval", "--run", "run", "--checkpoint", "run/ckpt-99"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diagnose_emits_plots_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_tiny(p, "a", &[]);
    train_tiny(p, "b", &["--loss", "js"]);
    let out = hsisr(p, &["diagnose", "--run", "a", "--compare", "b"]);
    ok(&out);
    for f in [
        "is_curve.png",
        "fid_curve.png",
        "density.png",
        "spectrum.png",
        "curves.csv",
        "density.csv",
    ] {
        assert!(p.join("a/plots").join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(p.join("a/plots/curves.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("b,")));

    let printed: f64 = String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix("overlap = ").map(|v| v.parse().unwrap()))
        .unwrap();
    let config = TrainConfig::from_text(&fs::read_to_string(p.join("a/config.cfg")).unwrap(), &TrainConfig::desk()).unwrap();
    let data = TrainData::synthetic(&config.data, config.bands, config.scale, config.hr_patch, config.seed).unwrap();
    let state = restore(&p.join("a/ckpt-6"), &config).unwrap();
    assert_eq!(printed, collapse_diagnostics(&state, &data).unwrap().overlap);

    let out = hsisr(p, &["diagnose", "--run", "missing"]);
    assert_eq!(out.status.code(), Some(2));
}
