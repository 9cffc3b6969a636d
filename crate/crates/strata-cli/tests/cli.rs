//! End-to-end checks of the binary: pipeline smoke run, stage guards,
//! exit codes, and prediction behavior.

use std::path::{Path, PathBuf};
use std::process::Command;

fn strata() -> Command {
    Command::new(env!("CARGO_BIN_EXE_strata"))
}

const SYNTH_SPEC: &str = r#"
n = 240
k = 2
mixture_weights = [0.5, 0.5]
intercept = 0.1
beta = [[0.6], [-0.4, 0.4]]
gamma = [-0.3, 0.3]
theta = [[-0.4, 0.4], [0.3, -0.3, -0.3, 0.3]]
outcome_name = "y"
outcome_levels = ["neg", "pos"]

[[variables]]
name = "x1"
kind = "continuous"
means = [-2.0, 2.0]
sd = 1.0

[[variables]]
name = "x2"
kind = "categorical"
levels = ["a", "b"]
probs = [[0.8, 0.2], [0.2, 0.8]]
"#;

fn write_config(dir: &Path, out: &str) -> PathBuf {
    let cfg = format!(
        r#"
input = "{dir}/data/data.csv"
schema = "{dir}/data/schema.json"
out = "{dir}/{out}"
seed = 11

[cluster]
k = 2
restarts = 5

[stability]
k_min = 2
k_max = 3
replicates = 8
restarts_original = 3
restarts_bootstrap = 2

[fit]
grid_size = 12
folds = 4
repeats = 1
tol = 1e-8

[bootstrap]
replicates = 4
cv_repeats = 1
grid_size = 10
"#,
        dir = dir.display(),
        out = out
    );
    let path = dir.join(format!("{out}.toml"));
    std::fs::write(&path, cfg).unwrap();
    path
}

fn synthesize_into(dir: &Path) {
    let spec = dir.join("synth.toml");
    std::fs::write(&spec, SYNTH_SPEC).unwrap();
    let st = strata()
        .args(["synthesize", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(dir.join("data"))
        .args(["--seed", "3"])
        .status()
        .unwrap();
    assert!(st.success());
}

fn run_stage(config: &Path, stage: &str, extra: &[&str]) {
    let st = strata()
        .arg(stage)
        .arg("--config")
        .arg(config)
        .args(extra)
        .status()
        .unwrap();
    assert!(st.success(), "stage {stage} failed");
}

#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    synthesize_into(tmp.path());
    let config = write_config(tmp.path(), "out");

    for stage in ["cluster", "stability", "fit", "effects", "bootstrap", "report"] {
        run_stage(&config, stage, &[]);
    }
    for artifact in [
        "partition.json",
        "stability.json",
        "fit.json",
        "effects.json",
        "effects.csv",
        "bootstrap.json",
        "bootstrap.csv",
        "cv_curve.csv",
        "stability_curve.csv",
        "energy_curve.csv",
        "report.txt",
    ] {
        let p = tmp.path().join("out").join(artifact);
        assert!(p.exists(), "missing artifact {artifact}");
    }
    // Every CSV has a metadata sidecar.
    for csv in ["effects.csv", "bootstrap.csv", "cv_curve.csv"] {
        let sidecar = tmp.path().join("out").join(format!("{csv}.meta.json"));
        let text = std::fs::read_to_string(sidecar).unwrap();
        assert!(text.contains("config_hash"));
        assert!(text.contains("\"seed\": 11"));
    }
}

#[test]
fn effects_without_fit_names_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    synthesize_into(tmp.path());
    let config = write_config(tmp.path(), "out_guard");
    let out = strata()
        .args(["effects", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fit"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_one() {
    let out = strata().arg("fit").output().unwrap(); // no --config
    assert_eq!(out.status.code(), Some(1));
    let out = strata().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_validation_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    synthesize_into(tmp.path());
    // Corrupt the data: unseen categorical level.
    let data = tmp.path().join("data/data.csv");
    let mut text = std::fs::read_to_string(&data).unwrap();
    text = text.replace("\nb,", "\nzzz,");
    let text = text.replacen(",a,", ",zzz,", 1);
    std::fs::write(&data, text).unwrap();
    let config = write_config(tmp.path(), "out_bad");
    let out = strata()
        .args(["cluster", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn predict_scores_training_rows_consistently() {
    let tmp = tempfile::tempdir().unwrap();
    synthesize_into(tmp.path());
    let config = write_config(tmp.path(), "out_pred");
    run_stage(&config, "cluster", &[]);
    run_stage(&config, "fit", &[]);

    // Build a prediction input from the first training rows plus one row
    // with an unseen level.
    let data = std::fs::read_to_string(tmp.path().join("data/data.csv")).unwrap();
    let mut lines: Vec<&str> = data.lines().collect();
    lines.truncate(6);
    let mut pred_lines = vec!["x1,x2".to_string()];
    for l in &lines[1..] {
        let fields: Vec<&str> = l.split(',').collect();
        pred_lines.push(format!("{},{}", fields[0], fields[1]));
    }
    pred_lines.push("0.5,zzz".to_string());
    let rows = tmp.path().join("rows.csv");
    std::fs::write(&rows, pred_lines.join("\n") + "\n").unwrap();

    run_stage(&config, "predict", &["--rows", rows.to_str().unwrap()]);
    let preds = std::fs::read_to_string(tmp.path().join("out_pred/predictions.csv")).unwrap();
    let part: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out_pred/partition.json")).unwrap())
            .unwrap();
    let labels = part["partition"]["labels"].as_array().unwrap();

    let pred_rows: Vec<&str> = preds.lines().skip(1).collect();
    assert_eq!(pred_rows.len(), 6);
    for (i, row) in pred_rows.iter().take(5).enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3], "ok");
        // Training row fed back lands in its training cluster.
        assert_eq!(
            fields[1].parse::<u64>().unwrap(),
            labels[i].as_u64().unwrap(),
            "row {i} cluster mismatch"
        );
        let p: f64 = fields[2].parse().unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    // The unseen-level row is flagged, not scored.
    assert!(pred_rows[5].contains("flagged"));
    assert!(pred_rows[5].contains("zzz"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    synthesize_into(tmp.path());
    let config = write_config(tmp.path(), "rep");
    let artifacts = [
        "partition.json",
        "stability.json",
        "fit.json",
        "effects.json",
        "bootstrap.json",
        "effects.csv",
        "bootstrap.csv",
        "cv_curve.csv",
    ];
    // Same config file both times; only the worker cap differs.
    let mut first: Vec<Vec<u8>> = Vec::new();
    for stage in ["cluster", "stability", "fit", "effects", "bootstrap"] {
        run_stage(&config, stage, &["--workers", "1"]);
    }
    for a in artifacts {
        first.push(std::fs::read(tmp.path().join("rep").join(a)).unwrap());
    }
    for stage in ["cluster", "stability", "fit", "effects", "bootstrap"] {
        run_stage(&config, stage, &["--workers", "3"]);
    }
    for (a, before) in artifacts.iter().zip(&first) {
        let after = std::fs::read(tmp.path().join("rep").join(a)).unwrap();
        assert_eq!(&after, before, "artifact {a} differs across reruns");
    }
}
