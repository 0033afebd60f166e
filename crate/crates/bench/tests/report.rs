use std::path::Path;
use std::process::Command;

use tkat_bench::config::BenchConfig;
use tkat_bench::harness::{run_benchmark, BenchmarkReport, RunOptions};
use tkat_bench::report::{aggregates, mean_std, summary_csv, write_outputs, OUTPUT_FILES};
use tkat_core::models::{build_model, ModelDims};

fn config(models: &str, horizons: &str, seeds: &str, extra: &str) -> BenchConfig {
    BenchConfig::from_toml(&format!(
        r#"
[data]
synthetic = {{ hours = 700, assets = 3, seed = 4 }}
past_len = 6
median_window = 48

[models]
names = {models}
d_model = 4
heads = 2
hidden = 4
baseline_layers = 1

[training]
max_epochs = 2
batch_size = 64
{extra}

[horizons]
values = {horizons}

[seeds]
values = {seeds}
"#
    ))
    .unwrap()
}

fn run(cfg: &BenchConfig, jobs: usize) -> BenchmarkReport {
    let opts = RunOptions {
        jobs: Some(jobs),
        ..RunOptions::default()
    };
    run_benchmark(cfg, &opts).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn one_model_two_seeds_gives_two_raw_rows_and_one_aggregate() {
    let report = run(&config(r#"["GRU"]"#, "[2]", "[0, 1]", ""), 1);
    assert_eq!(report.cells.len(), 2);
    assert_eq!(report.failed(), 0);
    assert_eq!(aggregates(&report).len(), 1);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&report, dir.path()).unwrap();
    assert_eq!(read(dir.path(), "results.csv").lines().count(), 1 + 2);
    assert_eq!(read(dir.path(), "aggregates.csv").lines().count(), 1 + 1);
    assert_eq!(std::fs::read_dir(dir.path().join("histories")).unwrap().count(), 2);
}

#[test]
fn summary_is_recomputable_from_raw_rows() {
    let report = run(&config(r#"["MLP", "GRU"]"#, "[1, 3]", "[0, 1, 2]", ""), 1);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&report, dir.path()).unwrap();

    let results = read(dir.path(), "results.csv");
    let mut rows = csv::Reader::from_reader(results.as_bytes());
    let raw: Vec<(String, usize, f64)> = rows
        .records()
        .map(|r| {
            let r = r.unwrap();
            assert_eq!(&r[3], "ok");
            (r[0].to_string(), r[1].parse().unwrap(), r[4].parse().unwrap())
        })
        .collect();
    assert_eq!(raw.len(), 2 * 2 * 3);

    let summary = read(dir.path(), "summary.csv");
    let mut table = csv::Reader::from_reader(summary.as_bytes());
    let header = table.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["horizon", "MLP_mean", "MLP_std", "GRU_mean", "GRU_std"]
    );
    let body: Vec<_> = table.records().map(|r| r.unwrap()).collect();
    assert_eq!(body.len(), 2);
    for row in &body {
        let h: usize = row[0].parse().unwrap();
        for (j, model) in ["MLP", "GRU"].iter().enumerate() {
            let values: Vec<f64> = raw.iter().filter(|r| r.0 == *model && r.1 == h).map(|r| r.2).collect();
            assert_eq!(values.len(), 3);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let emitted_mean: f64 = row[1 + 2 * j].parse().unwrap();
            let emitted_std: f64 = row[2 + 2 * j].parse().unwrap();
            assert!((mean - emitted_mean).abs() < 1e-12);
            assert!((std - emitted_std).abs() < 1e-12);
        }
    }
}

#[test]
fn population_std() {
    assert_eq!(mean_std(&[1.0, 3.0]), Some((2.0, 1.0)));
    assert_eq!(mean_std(&[5.0]), Some((5.0, 0.0)));
    assert_eq!(mean_std(&[]), None);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let cfg = config(r#"["TKAT", "LSTM"]"#, "[2]", "[3, 4]", "");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&run(&cfg, 1), a.path()).unwrap();
    write_outputs(&run(&cfg, 2), b.path()).unwrap();
    for name in OUTPUT_FILES.iter().filter(|n| **n != "timing.csv") {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(a.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config_sha256"], cfg.sha256());
    assert_eq!(manifest["seeds"], serde_json::json!([3, 4]));
}

#[test]
fn empty_model_list_writes_nothing() {
    let text = config(r#"["GRU"]"#, "[1]", "[0]", "")
        .canonical()
        .replace(r#"names = ["GRU"]"#, "names = []");
    assert!(BenchConfig::from_toml(&text).is_err());

    let mut report = run(&config(r#"["GRU"]"#, "[1]", "[0]", ""), 1);
    report.models.clear();
    report.cells.clear();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(write_outputs(&report, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn failed_cells_are_recorded_and_the_run_continues() {
    let report = run(&config(r#"["GRU", "MLP"]"#, "[1]", "[0, 1]", "timeout_secs = 1e-9"), 1);
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.failed(), 4);
    for c in &report.cells {
        assert!(c.outcome.as_ref().unwrap_err().contains("timeout"), "{:?}", c.outcome);
        assert_eq!(c.history.len(), 1);
    }
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&report, dir.path()).unwrap();
    assert!(read(dir.path(), "results.csv")
        .lines()
        .skip(1)
        .all(|l| l.contains(",failed,")));
    let summary = summary_csv(&report);
    assert_eq!(summary.lines().nth(1), Some("1,,,,"));
}

#[test]
fn checkpoints_restore_the_trained_weights() {
    let cfg = config(r#"["TKAT-B"]"#, "[1]", "[0]", "");
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let report = run_benchmark(&cfg, &opts).unwrap();
    assert_eq!(report.failed(), 0);
    let saved = tkat_bench::checkpoint::load(&dir.path().join("TKAT-B_h1_s0.ckpt")).unwrap();
    let dims = cfg.model_dims(3, 2, 1);
    let mut model = build_model(report.models[0], &dims, 0).unwrap();
    assert_eq!(saved.count(), model.store().count());
    tkat_bench::checkpoint::restore_into(model.store_mut(), &saved).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "TKAT-B_h1_s0.json")).unwrap();
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["config_sha256"], cfg.sha256());
}

#[test]
fn gru_parameter_counts_match_the_published_table() {
    for (horizon, expected) in [(1, 97_001), (3, 97_203), (30, 99_930)] {
        let dims = ModelDims::new(19, 2, 30, horizon);
        let model = build_model("GRU".parse().unwrap(), &dims, 0).unwrap();
        assert_eq!(model.store().count(), expected, "horizon {horizon}");
    }
}

#[test]
fn cli_params_and_synth() {
    let exe = env!("CARGO_BIN_EXE_bench");
    let out = Command::new(exe)
        .args(["params", "--model", "gru", "--horizon", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().last().unwrap().trim().ends_with("97203"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("s.csv");
    let status = Command::new(exe)
        .args(["synth", "--hours", "50", "--assets", "2", "--seed", "1", "--out"])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let table = tkat_bench::series_csv::read_series_file(&csv_path, None).unwrap();
    assert_eq!(table.len(), 50);
    assert_eq!(table.names, ["ASSET1", "ASSET2"]);

    let bad = Command::new(exe)
        .args(["params", "--model", "transformer", "--horizon", "1"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
