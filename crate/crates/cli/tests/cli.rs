use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sljp::tensor::Tensor2;
use sljp::tensor_file::TensorFile;

fn sljp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sljp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn prepare_overfit(dir: &Path) -> String {
    let out = sljp(&["prepare", "--synthetic", "overfit", "--out", p(dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("config.toml").to_str().unwrap().to_owned()
}

fn error_line(o: &Output) -> String {
    let err = stderr(o);
    let line = err
        .lines()
        .find(|l| l.starts_with("error class="))
        .unwrap_or_default();
    line.to_owned()
}

#[test]
fn missing_corpus_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    fs::remove_file(dir.path().join("train.jsonl")).unwrap();
    let out = sljp(&[
        "train",
        "--config",
        &cfg,
        "--out",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(error_line(&out).starts_with("error class=io.missing_input message="));
}

#[test]
fn missing_config_is_an_input_error() {
    let out = sljp(&[
        "train",
        "--config",
        "/no/such/config.toml",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).contains("class=io.missing_input"));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let out = sljp(&[
        "train",
        "--config",
        &cfg,
        "--set",
        "train.learning_rates.decoder=1e-3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).contains("class=config.invalid"));
}

#[test]
fn zero_epochs_writes_initialised_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let run = dir.path().join("run");
    let out = sljp(&["train", "--config", &cfg, "--epochs", "0", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(run.join("metrics.jsonl")).unwrap(), "");
    for ck in ["best", "final"] {
        let c = sljp::checkpoint::Checkpoint::load(&run.join(ck)).unwrap();
        assert_eq!(c.meta.epoch, 0);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 42);
    assert!(manifest["inputs"].as_object().unwrap().len() >= 3);
}

#[test]
fn quickstart_trains_evaluates_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let run = dir.path().join("run");
    let out = sljp(&["train", "--config", &cfg, "--out", p(&run)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 50);

    let best = run.join("best");
    let eval = |dest: &str| {
        let out = sljp(&[
            "eval",
            "--config",
            &cfg,
            "--checkpoint",
            p(&best),
            "--split",
            "train",
            "--out",
            p(&dir.path().join(dest)),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let first = eval("eval1");
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert!(report["macro_f1_per_label_mean"].as_f64().unwrap() >= 0.95);
    assert_eq!(report["threshold_policy"], "fixed");
    assert_eq!(first, eval("eval2"), "eval output is reproducible");

    let out = sljp(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        p(&best),
        "--split",
        "train",
        "--policy",
        "self-fit",
        "--mode",
        "roc",
        "--out",
        p(&dir.path().join("eval3")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("self-fit/roc"));

    let pred = dir.path().join("pred");
    let input = dir.path().join("train.jsonl");
    let out = sljp(&[
        "predict",
        "--config",
        &cfg,
        "--checkpoint",
        p(&best),
        "--input",
        p(&input),
        "--out",
        p(&pred),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let preds = fs::read_to_string(pred.join("predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 32);
    let first: serde_json::Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(first["probabilities"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_without_dev_split_cannot_dev_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let run = dir.path().join("run");
    assert!(
        sljp(&["train", "--config", &cfg, "--epochs", "0", "--out", p(&run)])
            .status
            .success()
    );
    let out = sljp(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        p(&run.join("best")),
        "--policy",
        "dev-fit",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).contains("class=config.invalid"));
}

#[test]
fn tampered_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let run = dir.path().join("run");
    assert!(
        sljp(&["train", "--config", &cfg, "--epochs", "0", "--out", p(&run)])
            .status
            .success()
    );
    fs::write(run.join("best/thresholds.json"), "{\"values\":[0,0,0,0]}").unwrap();
    let out = sljp(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        p(&run.join("best")),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).contains("class=data.checkpoint"));
}

#[test]
fn ablation_runs_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_overfit(dir.path());
    let ab = dir.path().join("ab");
    let out = sljp(&[
        "ablate",
        "--config",
        &cfg,
        "--epochs",
        "2",
        "--truncation",
        "8",
        "--out",
        p(&ab),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ab.join("ablation.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows
        .iter()
        .all(|r| r["error"].is_null() && r["epochs_run"] == 2));
    let no_ce = rows
        .iter()
        .find(|r| r["name"] == "without-concise-extraction")
        .unwrap();
    assert_eq!(no_ce["attention_untouched"], true);
    assert!(stdout(&out).contains("last-8-tokens"));
}

fn sample_tensor_file() -> Vec<u8> {
    let mut f = TensorFile::new(3);
    f.push(
        "doc0",
        0,
        Tensor2::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.25, 0.0, 1.5]).unwrap(),
    )
    .unwrap();
    f.push(
        "doc0",
        1,
        Tensor2::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap(),
    )
    .unwrap();
    f.to_bytes()
}

#[test]
fn validate_accepts_a_well_formed_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ok.semt");
    fs::write(&path, sample_tensor_file()).unwrap();
    let out = sljp(&["validate", p(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("entries=2"));
}

#[test]
fn validate_reports_truncation_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.semt");
    let bytes = sample_tensor_file();
    fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
    let out = sljp(&["validate", p(&path)]);
    assert_eq!(out.status.code(), Some(3));
    let line = error_line(&out);
    assert!(line.contains("class=data.format"), "{line}");
    assert!(line.contains("at byte "), "{line}");
}

#[test]
fn validate_rejects_nan_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nan.semt");
    let mut bytes = sample_tensor_file();
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    let out = sljp(&["validate", p(&path)]);
    assert_eq!(out.status.code(), Some(3));
    let line = error_line(&out);
    assert!(line.contains("class=data.nonfinite"), "{line}");
    assert!(line.contains(&format!("at byte {}", n - 4)), "{line}");
}

#[test]
fn validate_missing_file() {
    let out = sljp(&["validate", "/no/such/file.semt"]);
    assert_eq!(out.status.code(), Some(2));
}
