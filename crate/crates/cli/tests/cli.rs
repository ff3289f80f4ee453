//! End-to-end tests of the `aad` binary: every verb plus exit-code policy.

use std::path::Path;
use std::process::{Command, Output};

fn aad(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aad"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_synth_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("synth.json");
    std::fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "spec": {
    "machine_type": "fan",
    "n_normal": 12,
    "n_anomalous": 4,
    "snr_db": 6,
    "base_freqs": [120.0, 185.0],
    "anomaly_kind": "transient_bursts",
    "seed": 5
  }
}"#,
    )
    .unwrap();
    path
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<std::path::PathBuf> = walk(root);
    files.sort();
    files
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .map(|p| {
            (p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for entry in rd.filter_map(|e| e.ok()) {
            let p = entry.path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}

#[test]
fn synth_features_train_eval_bench_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_synth_config(tmp.path());
    let data = tmp.path().join("data");
    let feats = tmp.path().join("feats");
    let run = tmp.path().join("runs/svdd2");
    let report = tmp.path().join("report");

    let out = aad(&["synth", "--config", config.to_str().unwrap(), "--out", data.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("manifest.json").exists());
    assert_eq!(tree_bytes(&data).len(), 16);

    // Determinism: regenerating with the same config yields identical bytes.
    let first = tree_bytes(&data);
    let out = aad(
        &["synth", "--config", config.to_str().unwrap(), "--out", data.to_str().unwrap(), "--overwrite"],
        &[],
    );
    assert!(out.status.success());
    assert_eq!(first, tree_bytes(&data));

    // Features via AAD_DATA_ROOT; second run must be all cache hits.
    let out = aad(
        &["features", "--out", feats.to_str().unwrap()],
        &[("AAD_DATA_ROOT", data.to_str().unwrap())],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(feats.join("index.csv").exists());
    assert!(feats.join("feats/00000.feat").exists());
    assert!(feats.join("stats-fan-id_00-6dB.json").exists());
    let out = aad(
        &["features", "--out", feats.to_str().unwrap()],
        &[("AAD_DATA_ROOT", data.to_str().unwrap())],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0 computed, 16 cache hits"), "{stdout}");

    // Short training run driven by a config override.
    let train_cfg = tmp.path().join("train.json");
    std::fs::write(&train_cfg, r#"{"schema_version": 1, "max_epochs": 2}"#).unwrap();
    let out = aad(
        &[
            "train", "--features", feats.to_str().unwrap(), "--model", "svdd", "--dim", "2",
            "--machine", "fan", "--snr", "6dB", "--seed", "3",
            "--config", train_cfg.to_str().unwrap(), "--out", run.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("checkpoint.bin").exists());
    let log = std::fs::read_to_string(run.join("training_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_loss,is_best\n"));
    assert_eq!(log.lines().count(), 3); // header + 2 epochs

    let out = aad(
        &[
            "eval", "--checkpoints", run.parent().unwrap().to_str().unwrap(),
            "--features", feats.to_str().unwrap(), "--out", report.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.starts_with("machine,model_id,snr,seed,model_kind,dim,auc,n_test\n"));
    assert!(csv.contains("fan,id_00,6dB,3,svdd,2,"), "{csv}");
    assert!(report.join("report.md").exists());

    let out = aad(
        &[
            "bench", "--features", feats.to_str().unwrap(),
            "--checkpoint", run.join("checkpoint.bin").to_str().unwrap(), "--reps", "3",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("clip scoring: mean"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = aad(&["synth", "--config", "/nonexistent.json", "--out", "/tmp/x"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_refuses_nonempty_target_without_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_synth_config(tmp.path());
    let data = tmp.path().join("data");
    let args = ["synth", "--config", config.to_str().unwrap(), "--out", data.to_str().unwrap()];
    assert!(aad(&args, &[]).status.success());
    let out = aad(&args, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn features_without_data_root_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = aad(&["features", "--out", tmp.path().join("f").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_clean_and_fails_with_injected_fault() {
    let out = aad(&["verify"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all checks passed"), "{stdout}");

    let out = aad(&["verify"], &[("AAD_VERIFY_INJECT_FAULT", "1")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gradient check (dense + conv stack): FAIL"));
}
