use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
[train]
k_per_batch = 4
m_views = 2
window_size = 32
n_context_min = 5
n_context_max = 10
grid_size = 16
cnn_layers = 2
cnn_channels = 4
encoding_size = 8
decoder_hidden = 8
epochs = 2

[eval]
m_views = 2

[eval.probe]
steps = 50

[synth]
n_classes = 2
segments_per_class = 10
window_len = 32
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contrnp"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the tiny config and a synthetic dataset into a fresh directory.
fn setup() -> (TempDir, std::path::PathBuf, std::path::PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, TINY).unwrap();
    let data = dir.path().join("data.csv");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    (dir, cfg, data)
}

#[test]
fn synth_writes_requested_segments() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    ok(&["synth", "--classes", "3", "--segments", "4", "--window", "16", "--out", s(&data)]);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time,ch0,label");
    assert_eq!(lines.count(), 3 * 4 * 16);
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn train_and_eval_are_deterministic() {
    let (dir, cfg, data) = setup();
    let mut metrics = Vec::new();
    for run_id in 0..2 {
        let out = dir.path().join(format!("run{run_id}"));
        ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--seed", "3"]);
        let ck = out.join("model.ckpt");
        assert!(out.join("train_log.csv").exists());
        assert!(out.join("manifest.toml").exists());
        let m = out.join("metrics.csv");
        ok(&["eval", "--config", s(&cfg), "--checkpoint", s(&ck), "--data", s(&data), "--seed", "3", "--out", s(&m)]);
        metrics.push((fs::read(&ck).unwrap(), fs::read_to_string(&m).unwrap()));
    }
    assert_eq!(metrics[0], metrics[1]);
    let csv = &metrics[0].1;
    assert!(csv.starts_with("metric,value,seed\n"));
    for name in ["accuracy", "auprc", "silhouette", "davies_bouldin"] {
        assert!(csv.contains(&format!("\n{name},")), "{name} missing from {csv}");
    }
}

#[test]
fn sweep_and_forecast_write_expected_columns() {
    let (dir, cfg, data) = setup();
    let out = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--epochs", "1"]);
    let ck = out.join("model.ckpt");

    let sweep = dir.path().join("sweep.csv");
    ok(&["sweep-labels", "--config", s(&cfg), "--checkpoint", s(&ck), "--data", s(&data), "--fractions", "0.5,1.0", "--out", s(&sweep)]);
    let text = fs::read_to_string(&sweep).unwrap();
    assert_eq!(text.lines().next().unwrap(), "fraction,accuracy,auprc");
    assert_eq!(text.lines().count(), 3);

    // Without --config the checkpoint alone determines the architecture.
    let fc = dir.path().join("forecast.csv");
    ok(&["forecast", "--checkpoint", s(&ck), "--data", s(&data), "--window", "32", "--n-context", "8", "--segment-id", "2", "--out", s(&fc)]);
    let text = fs::read_to_string(&fc).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,y_true,mu,sigma");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r.len() == 4 && r[3] > 0.0 && r.iter().all(|v| v.is_finite())));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nlearnig_rate = 0.1\n").unwrap();
    let out = run(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learnig_rate"), "{err}");
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--data", "x.csv"]).status.code(), Some(1));

    let missing = dir.path().join("missing.csv");
    let out = run(&["train", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    let (_d, _cfg, data) = setup();
    let out = run(&["eval", "--checkpoint", s(&garbage), "--data", s(&data), "--window", "32", "--out", s(&dir.path().join("m.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("neg.toml");
    fs::write(&cfg, "[train]\ntau = -1.0\n").unwrap();
    let out = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o2"))]);
    assert_eq!(out.status.code(), Some(1));
}
