//! Seed aggregation and the output files of a benchmark run.
//!
//! Every file except `timing.csv` is a pure function of the config, the data
//! and the seeds, so reruns reproduce them byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use tkat_core::models::ModelKind;
use tkat_core::train::history_csv;

use crate::error::{BenchError, Result};
use crate::harness::BenchmarkReport;

/// Population mean and standard deviation (divides by `n`).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Seed statistics for one `(model, horizon)` pair over the seeds that
/// completed.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub model: ModelKind,
    pub horizon: usize,
    pub completed: usize,
    pub failed: usize,
    /// `(mean, std)` of the test R²; `None` when no seed completed.
    pub r2: Option<(f64, f64)>,
    /// `(mean, std)` of the test RMSE at each forecast step.
    pub rmse_per_step: Vec<(f64, f64)>,
}

pub fn aggregate(report: &BenchmarkReport, model: ModelKind, horizon: usize) -> Aggregate {
    let ok: Vec<_> = report
        .seeds
        .iter()
        .filter_map(|&s| report.cell(model, horizon, s))
        .filter_map(|c| c.outcome.as_ref().ok())
        .collect();
    let r2: Vec<f64> = ok.iter().map(|m| m.r2).collect();
    let rmse_per_step = (0..horizon)
        .filter_map(|k| mean_std(&ok.iter().map(|m| m.rmse_per_step[k]).collect::<Vec<_>>()))
        .collect();
    Aggregate {
        model,
        horizon,
        completed: ok.len(),
        failed: report.seeds.len() - ok.len(),
        r2: mean_std(&r2),
        rmse_per_step,
    }
}

/// Aggregates ordered models × horizons.
pub fn aggregates(report: &BenchmarkReport) -> Vec<Aggregate> {
    report
        .models
        .iter()
        .flat_map(|&m| report.horizons.iter().map(move |&h| (m, h)))
        .map(|(m, h)| aggregate(report, m, h))
        .collect()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Raw rows, one per cell.
pub fn results_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model,horizon,seed,status,r2,r2_step_mean,mse,n_params,best_epoch,epochs,error\n");
    for c in &report.cells {
        let (status, r2, r2m, mse, best, err) = match &c.outcome {
            Ok(m) => (
                "ok",
                m.r2.to_string(),
                m.r2_step_mean.to_string(),
                m.mse.to_string(),
                m.best_epoch.to_string(),
                String::new(),
            ),
            Err(e) => (
                "failed",
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                csv_field(e),
            ),
        };
        let _ = writeln!(
            s,
            "{},{},{},{status},{r2},{r2m},{mse},{},{best},{},{err}",
            c.model,
            c.horizon,
            c.seed,
            opt(c.n_params),
            c.history.len()
        );
    }
    s
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Long-form seed statistics, one row per `(model, horizon)`.
pub fn aggregates_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model,horizon,completed,failed,r2_mean,r2_std\n");
    for a in aggregates(report) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            a.model,
            a.horizon,
            a.completed,
            a.failed,
            opt(a.r2.map(|r| r.0)),
            opt(a.r2.map(|r| r.1))
        );
    }
    s
}

/// Pivot with rows = horizons and a mean and std column per model.
pub fn summary_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("horizon");
    for m in &report.models {
        let _ = write!(s, ",{m}_mean,{m}_std");
    }
    s.push('\n');
    for &h in &report.horizons {
        s.push_str(&h.to_string());
        for &m in &report.models {
            let r2 = aggregate(report, m, h).r2;
            let _ = write!(s, ",{},{}", opt(r2.map(|r| r.0)), opt(r2.map(|r| r.1)));
        }
        s.push('\n');
    }
    s
}

/// Parameter totals with rows = models and a column per horizon.
pub fn params_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model");
    for h in &report.horizons {
        let _ = write!(s, ",h{h}");
    }
    s.push('\n');
    for &m in &report.models {
        s.push_str(&m.to_string());
        for &h in &report.horizons {
            let n = report
                .cells
                .iter()
                .find(|c| c.model == m && c.horizon == h && c.n_params.is_some())
                .and_then(|c| c.n_params);
            let _ = write!(s, ",{}", opt(n));
        }
        s.push('\n');
    }
    s
}

/// Parameter counts per top-level submodule.
pub fn param_breakdown_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model,horizon,submodule,params\n");
    for &m in &report.models {
        for &h in &report.horizons {
            if let Some(c) = report
                .cells
                .iter()
                .find(|c| c.model == m && c.horizon == h && c.n_params.is_some())
            {
                for (group, n) in &c.breakdown {
                    let _ = writeln!(s, "{m},{h},{group},{n}");
                }
            }
        }
    }
    s
}

/// Seed statistics of the test RMSE at each forecast step (1-based).
pub fn rmse_by_step_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model,horizon,step,rmse_mean,rmse_std\n");
    for a in aggregates(report) {
        for (k, (mean, std)) in a.rmse_per_step.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{mean},{std}", a.model, a.horizon, k + 1);
        }
    }
    s
}

/// Wall time per cell; the only output that differs between reruns.
pub fn timing_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("model,horizon,seed,wall_time_secs\n");
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{},{},{},{:.3}",
            c.model,
            c.horizon,
            c.seed,
            c.wall_time.as_secs_f64()
        );
    }
    s
}

pub fn manifest_json(report: &BenchmarkReport) -> Result<String> {
    let models: Vec<String> = report.models.iter().map(|m| m.to_string()).collect();
    let value = json!({
        "config_sha256": report.config.sha256(),
        "config": report.config.canonical(),
        "data_sha256": report.data_sha256,
        "models": models,
        "horizons": report.horizons,
        "seeds": report.seeds,
        "std": "population (divides by the number of completed seeds)",
        "r2": "test R² over all (sample, step) pairs in scaled units",
        "versions": {
            "tkat-core": tkat_core::VERSION,
            "tkat-bench": env!("CARGO_PKG_VERSION"),
        },
        "cells": report.cells.len(),
        "failed_cells": report.failed(),
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Files written by [`write_outputs`], relative to the output directory.
pub const OUTPUT_FILES: [&str; 8] = [
    "results.csv",
    "aggregates.csv",
    "summary.csv",
    "params.csv",
    "param_breakdown.csv",
    "rmse_by_step.csv",
    "timing.csv",
    "manifest.json",
];

/// Writes every output into `out`. Files are staged in a temporary
/// directory inside `out` and moved into place once all of them exist;
/// an invalid report leaves no files behind.
pub fn write_outputs(report: &BenchmarkReport, out: &Path) -> Result<()> {
    if report.models.is_empty() || report.horizons.is_empty() || report.seeds.is_empty() {
        return Err(BenchError::Config("report has no models, horizons or seeds".into()));
    }
    if report.cells.len() != report.models.len() * report.horizons.len() * report.seeds.len() {
        return Err(BenchError::Config("report is missing cells".into()));
    }
    let contents = [
        results_csv(report),
        aggregates_csv(report),
        summary_csv(report),
        params_csv(report),
        param_breakdown_csv(report),
        rmse_by_step_csv(report),
        timing_csv(report),
        manifest_json(report)?,
    ];
    std::fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let stage = tempfile::Builder::new()
        .prefix(".staging")
        .tempdir_in(out)
        .map_err(|e| BenchError::io(out, e))?;
    let write = |rel: &str, text: &str| {
        let path = stage.path().join(rel);
        std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))
    };
    for (name, text) in OUTPUT_FILES.iter().zip(&contents) {
        write(name, text)?;
    }
    let histories = stage.path().join("histories");
    std::fs::create_dir(&histories).map_err(|e| BenchError::io(&histories, e))?;
    for c in &report.cells {
        write(&format!("histories/{}.csv", c.label()), &history_csv(&c.history))?;
    }
    let old = out.join("histories");
    if old.exists() {
        std::fs::remove_dir_all(&old).map_err(|e| BenchError::io(&old, e))?;
    }
    for name in OUTPUT_FILES.iter().copied().chain(["histories"]) {
        let (from, to) = (stage.path().join(name), out.join(name));
        std::fs::rename(&from, &to).map_err(|e| BenchError::io(&to, e))?;
    }
    Ok(())
}
