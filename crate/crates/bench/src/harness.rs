//! Runs every `(model, horizon, seed)` cell of a benchmark config in a
//! worker pool. Each cell owns its parameters, tape and optimizer.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use tkat_core::data::RawSeriesTable;
use tkat_core::models::{build_model, ModelKind};
use tkat_core::synth::{generate, SynthSpec};
use tkat_core::train::{train_loop, EpochRecord, SampleSet, TrainObserver};

use crate::cache::{prepare_cached, sha256_hex};
use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::series_csv::{read_series, series_to_bytes};

/// Environment variable that overrides the `--jobs` worker count.
pub const THREADS_ENV: &str = "BENCH_THREADS";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: RawSeriesTable,
    /// SHA-256 of the CSV bytes (of the canonical CSV rendering for
    /// synthetic data).
    pub sha256: String,
}

pub fn load_dataset(cfg: &BenchConfig) -> Result<Dataset> {
    match (&cfg.data.csv, &cfg.data.synthetic) {
        (Some(path), None) => {
            let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
            let table = read_series(&bytes[..], path, cfg.data.target.as_deref())?;
            Ok(Dataset {
                table,
                sha256: sha256_hex(&bytes),
            })
        }
        (None, Some(s)) => {
            let mut table = generate(&SynthSpec::new(s.hours, s.assets, s.seed))?;
            if let Some(target) = &cfg.data.target {
                table = RawSeriesTable::new(table.timestamps, table.names, table.columns, target.clone())?;
            }
            let sha256 = sha256_hex(&series_to_bytes(&table));
            Ok(Dataset { table, sha256 })
        }
        _ => Err(BenchError::Config(
            "[data] needs exactly one of csv or synthetic".into(),
        )),
    }
}

/// Packed train/validation/test sets for one horizon.
#[derive(Debug, Clone)]
pub struct HorizonData {
    pub horizon: usize,
    pub n_observed: usize,
    pub n_known: usize,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

pub fn horizon_data(cfg: &BenchConfig, data: &Dataset, horizon: usize) -> Result<HorizonData> {
    let spec = cfg.window_spec(horizon);
    let prepared = prepare_cached(&data.table, &data.sha256, &spec, cfg.data.cache_dir.as_deref())?;
    let pack = |s: &[_]| SampleSet::from_samples(s, spec.past_len, horizon);
    Ok(HorizonData {
        horizon,
        n_observed: prepared.n_observed(),
        n_known: prepared.n_known(),
        train: pack(&prepared.train)?,
        val: pack(&prepared.val)?,
        test: pack(&prepared.test)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    /// R² over all `(sample, step)` pairs of the test set.
    pub r2: f64,
    pub r2_step_mean: f64,
    pub rmse_per_step: Vec<f64>,
    pub mse: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub model: ModelKind,
    pub horizon: usize,
    pub seed: u64,
    /// `None` when the model could not be built.
    pub n_params: Option<usize>,
    pub breakdown: Vec<(String, usize)>,
    pub outcome: std::result::Result<CellMetrics, String>,
    pub wall_time: Duration,
    pub history: Vec<EpochRecord>,
}

impl CellResult {
    pub fn label(&self) -> String {
        cell_label(self.model, self.horizon, self.seed)
    }
}

pub fn cell_label(model: ModelKind, horizon: usize, seed: u64) -> String {
    format!("{model}_h{horizon}_s{seed}")
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub data_sha256: String,
    pub models: Vec<ModelKind>,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Ordered models × horizons × seeds.
    pub cells: Vec<CellResult>,
}

impl BenchmarkReport {
    pub fn cell(&self, model: ModelKind, horizon: usize, seed: u64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.horizon == horizon && c.seed == seed)
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Callback invoked as each cell finishes.
pub type ProgressFn = Box<dyn Fn(&CellResult) + Sync>;

#[derive(Default)]
pub struct RunOptions {
    /// Worker count; `BENCH_THREADS` takes precedence, default 1.
    pub jobs: Option<usize>,
    /// Directory for best-weight checkpoints, one file per cell.
    pub checkpoint_dir: Option<PathBuf>,
    /// Called from worker threads as cells finish.
    pub progress: Option<ProgressFn>,
}

pub fn resolve_jobs(cli: Option<usize>) -> Result<usize> {
    let jobs = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| BenchError::Config(format!("{THREADS_ENV}={v:?} is not a worker count")))?,
        Err(_) => cli.unwrap_or(1),
    };
    Ok(jobs.max(1))
}

/// Stops training once the wall-clock budget is spent and keeps the history.
struct Watch {
    start: Instant,
    limit: Option<Duration>,
    history: Vec<EpochRecord>,
}

impl TrainObserver for Watch {
    fn on_epoch(&mut self, record: &EpochRecord) -> tkat_core::Result<()> {
        self.history.push(record.clone());
        match self.limit {
            Some(limit) if self.start.elapsed() > limit => Err(tkat_core::Error::Interrupted(format!(
                "timeout of {:.1}s reached after epoch {}",
                limit.as_secs_f64(),
                record.epoch
            ))),
            _ => Ok(()),
        }
    }
}

fn run_cell(
    cfg: &BenchConfig,
    data: &HorizonData,
    model_kind: ModelKind,
    seed: u64,
    checkpoint_dir: Option<&PathBuf>,
) -> CellResult {
    let mut cell = CellResult {
        model: model_kind,
        horizon: data.horizon,
        seed,
        n_params: None,
        breakdown: Vec::new(),
        outcome: Err(String::new()),
        wall_time: Duration::ZERO,
        history: Vec::new(),
    };
    let mut watch = Watch {
        start: Instant::now(),
        limit: cfg.training.timeout_secs.map(Duration::from_secs_f64),
        history: Vec::new(),
    };
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<CellMetrics> {
        let dims = cfg.model_dims(data.n_observed, data.n_known, data.horizon);
        let mut model = build_model(model_kind, &dims, seed)?;
        cell.n_params = Some(model.store().count());
        cell.breakdown = model.store().breakdown();
        let out = train_loop(
            model.as_mut(),
            &data.train,
            &data.val,
            Some(&data.test),
            &cfg.train_config(seed),
            &mut watch,
        )?;
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(format!("{}.ckpt", cell_label(model_kind, data.horizon, seed)));
            crate::checkpoint::save(&path, model.store())?;
            let manifest = serde_json::json!({
                "model": model_kind.to_string(),
                "horizon": data.horizon,
                "seed": seed,
                "config_sha256": cfg.sha256(),
                "config": cfg.canonical(),
            });
            let path = path.with_extension("json");
            let text = serde_json::to_string_pretty(&manifest)? + "\n";
            std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))?;
        }
        let test = out.test.expect("test set supplied");
        Ok(CellMetrics {
            r2: test.r2,
            r2_step_mean: test.r2_step_mean,
            rmse_per_step: test.rmse_per_step,
            mse: test.mse,
            best_epoch: out.best_epoch,
            best_val_loss: out.best_val_loss,
        })
    }));
    cell.outcome = match result {
        Ok(Ok(m)) => Ok(m),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(match panic.downcast_ref::<&str>() {
            Some(s) => format!("panic: {s}"),
            None => match panic.downcast_ref::<String>() {
                Some(s) => format!("panic: {s}"),
                None => "panic".into(),
            },
        }),
    };
    cell.history = watch.history;
    cell.wall_time = watch.start.elapsed();
    cell
}

/// Runs the whole grid. A failing cell is recorded and the rest continue;
/// only config and data errors abort the run.
pub fn run_benchmark(cfg: &BenchConfig, opts: &RunOptions) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let models = cfg.model_kinds()?;
    let data = load_dataset(cfg)?;
    let per_horizon = cfg
        .horizons
        .values
        .iter()
        .map(|&h| horizon_data(cfg, &data, h))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let mut grid = Vec::new();
    for &m in &models {
        for hd in &per_horizon {
            for &s in &cfg.seeds.values {
                grid.push((m, hd, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(opts.jobs)?)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))?;
    let cells = pool.install(|| {
        grid.par_iter()
            .map(|&(m, hd, s)| {
                let cell = run_cell(cfg, hd, m, s, opts.checkpoint_dir.as_ref());
                if let Some(progress) = &opts.progress {
                    progress(&cell);
                }
                cell
            })
            .collect::<Vec<_>>()
    });
    Ok(BenchmarkReport {
        config: cfg.clone(),
        data_sha256: data.sha256,
        models,
        horizons: cfg.horizons.values.clone(),
        seeds: cfg.seeds.values.clone(),
        cells,
    })
}
