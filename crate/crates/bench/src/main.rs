use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use tkat_bench::config::BenchConfig;
use tkat_bench::error::{BenchError, Result};
use tkat_bench::harness::{run_benchmark, RunOptions};
use tkat_bench::report::{summary_csv, write_outputs};
use tkat_bench::series_csv::write_series;
use tkat_core::data::CALENDAR_FEATURES;
use tkat_core::gradsuite::run_suite;
use tkat_core::models::{build_model, ModelDims, ModelKind};
use tkat_core::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(name = "bench", version, about = "Train and compare TKAT forecasters and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (model, horizon, seed) cell of a config and write the reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; BENCH_THREADS overrides this.
        #[arg(long)]
        jobs: Option<usize>,
        /// Save the best weights of each cell under <out>/checkpoints.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Write the built-in synthetic series as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4000)]
        hours: usize,
        #[arg(long, default_value_t = 5)]
        assets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the parameter count of a model with its submodule breakdown.
    Params {
        #[arg(long)]
        model: String,
        #[arg(long)]
        horizon: usize,
        /// Observed series; the input width adds the calendar features.
        #[arg(long, default_value_t = 19)]
        observed: usize,
        #[arg(long, default_value_t = 30)]
        past_len: usize,
        #[arg(long, default_value_t = 100)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 100)]
        hidden: usize,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            checkpoints,
        } => {
            let cfg = BenchConfig::load(&config)?;
            let opts = RunOptions {
                jobs,
                checkpoint_dir: checkpoints.then(|| out.join("checkpoints")),
                progress: Some(Box::new(|c| match &c.outcome {
                    Ok(m) => eprintln!(
                        "{:<28} r2 {:>8.4}  {:>7.1}s",
                        c.label(),
                        m.r2,
                        c.wall_time.as_secs_f64()
                    ),
                    Err(e) => eprintln!("{:<28} FAILED: {e}", c.label()),
                })),
            };
            let report = run_benchmark(&cfg, &opts)?;
            write_outputs(&report, &out)?;
            print!("{}", summary_csv(&report));
            eprintln!(
                "{} cells, {} failed, outputs in {}",
                report.cells.len(),
                report.failed(),
                out.display()
            );
            Ok(true)
        }
        Command::Synth {
            out,
            hours,
            assets,
            seed,
        } => {
            let table = generate(&SynthSpec::new(hours, assets, seed))?;
            let file = std::fs::File::create(&out).map_err(|e| BenchError::io(&out, e))?;
            write_series(std::io::BufWriter::new(file), &table).map_err(|source| BenchError::Csv {
                path: out.clone(),
                source,
            })?;
            Ok(true)
        }
        Command::Params {
            model,
            horizon,
            observed,
            past_len,
            d_model,
            heads,
            hidden,
        } => {
            let kind: ModelKind = model.parse()?;
            let mut dims = ModelDims::new(observed, CALENDAR_FEATURES, past_len, horizon);
            dims.d_model = d_model;
            dims.heads = heads;
            dims.hidden = hidden;
            let m = build_model(kind, &dims, 0)?;
            println!("{kind} horizon={horizon} input_width={}", observed + CALENDAR_FEATURES);
            for (group, n) in m.store().breakdown() {
                println!("  {group:<20} {n:>10}");
            }
            println!("  {:<20} {:>10}", "total", m.store().count());
            Ok(true)
        }
        Command::Gradcheck => {
            let start = Instant::now();
            let suite = run_suite()?;
            let mut ok = true;
            for e in &suite {
                ok &= e.passed();
                println!(
                    "{:<4} {:<22} max rel error {:.2e} (< {:.0e}) over {} coordinates",
                    if e.passed() { "PASS" } else { "FAIL" },
                    e.layer,
                    e.report.max_rel_error,
                    e.tolerance,
                    e.report.coordinates
                );
            }
            println!("{:.1}s", start.elapsed().as_secs_f64());
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
