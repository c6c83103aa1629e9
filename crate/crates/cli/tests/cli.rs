use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sbe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbe"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("SBE_OUTPUT_DIR")
        .output()
        .expect("run sbe")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = sbe(dir, args);
    assert!(
        out.status.success(),
        "sbe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A small generated blobs dataset in `dir`.
fn dataset(dir: &Path) -> PathBuf {
    ok(dir, &["gen-data", "--rows", "600", "--seed", "4"]);
    let path = dir.join("data.csv");
    assert!(path.exists() && dir.join("data.schema.json").exists());
    path
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    (header, reader.records().map(|r| r.unwrap()).collect())
}

const SMALL_FOREST: [&str; 4] = ["--n-trees", "10", "--max-depth", "8"];

#[test]
fn sweep_over_k_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let mut args = vec!["sweep", "--data", data.to_str().unwrap(), "--param", "k_draws", "--values", "1,2,4,8,16"];
    args.extend(SMALL_FOREST);
    ok(dir.path(), &args);
    let (header, rows) = records(&dir.path().join("sweep_k.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["k", "mean_metric", "std_metric"]);
    assert_eq!(rows.iter().map(|r| r[0].to_string()).collect::<Vec<_>>(), ["1", "2", "4", "8", "16"]);
    for r in &rows {
        let acc: f64 = r[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn evaluate_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["evaluate", "--data", data.to_str().unwrap(), "--threads", threads, "--seed", "9"];
        args.extend(SMALL_FOREST);
        args.extend(["--out", out.to_str().unwrap()]);
        ok(dir.path(), &args);
        std::fs::read(out).unwrap()
    };
    let first = run("1", "a.csv");
    assert_eq!(first, run("1", "b.csv"));
    assert_eq!(first, run("8", "c.csv"));
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("fold,accuracy\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn fit_then_transform_stacks_k_copies() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let data = data.to_str().unwrap();
    ok(dir.path(), &["fit", "--data", data, "--k-draws", "3", "--gamma", "0.5"]);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["k_draws"], 3);
    let model_path = dir.path().join("model.json");
    ok(dir.path(), &["transform", "--model", model_path.to_str().unwrap(), "--data", data]);
    let (header, rows) = records(&dir.path().join("encoded.csv"));
    assert_eq!(rows.len(), 3 * 600);
    assert_eq!(&header[0], "origin_row");
    assert_eq!(&header[1], "draw");
}

#[test]
fn trained_pipeline_scores_new_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let data = data.to_str().unwrap();
    let mut args = vec!["train", "--data", data];
    args.extend(SMALL_FOREST);
    ok(dir.path(), &args);
    let pipeline = dir.path().join("pipeline.json");
    ok(dir.path(), &["evaluate", "--model", pipeline.to_str().unwrap(), "--data", data]);
    let (header, rows) = records(&dir.path().join("evaluate.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["rows", "accuracy"]);
    assert_eq!(&rows[0][0], "600");
}

#[test]
fn importance_columns_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let mut args = vec!["importance", "--data", data.to_str().unwrap()];
    args.extend(SMALL_FOREST);
    ok(dir.path(), &args);
    let (header, rows) = records(&dir.path().join("importance.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["feature", "sampling", "target_mean"]);
    for col in 1..3 {
        let total: f64 = rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "column {col} sums to {total}");
    }
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sbe(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(sbe(dir.path(), &["--help"]).status.code(), Some(0));

    let data = dataset(dir.path());
    let bad_gamma = sbe(dir.path(), &["fit", "--data", data.to_str().unwrap(), "--gamma", "-1"]);
    assert_eq!(bad_gamma.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_gamma.stderr).contains("gamma"));

    let missing = dir.path().join("missing.csv");
    let schema = dir.path().join("data.schema.json");
    let out = sbe(
        dir.path(),
        &["fit", "--data", missing.to_str().unwrap(), "--schema", schema.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("experiment.json");
    std::fs::write(
        &config,
        r#"{
            "data": {"generator": {"kind": "hastie_quadratic", "n_rows": 400, "n_features": 10, "n_categorical": 2}},
            "learners": [{"kind": "random_forest", "n_trees": 5, "max_depth": 6}],
            "folds": 3,
            "seed": 11
        }"#,
    )
    .unwrap();
    ok(dir.path(), &["evaluate", "--config", config.to_str().unwrap()]);
    let (_, rows) = records(&dir.path().join("evaluate.csv"));
    assert_eq!(rows.len(), 3);

    std::fs::write(&config, r#"{"folds": 3, "unknown_key": 1}"#).unwrap();
    let out = sbe(dir.path(), &["evaluate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
