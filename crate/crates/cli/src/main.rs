//! `rotasde`: runs SO(n) SDE experiments from a JSON config and writes CSV
//! and JSON outputs plus a checksummed manifest.
//!
//! Precedence: command-line flags override config fields, and the
//! subcommand overrides the config's `experiment` field.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use rotasde_core::rng::RNG_ALGORITHM;
use serde_json::json;

use config::{Experiment, ExperimentConfig, Overrides};
use error::CliError;
use output::OutputSet;

#[derive(Debug, Parser)]
#[command(name = "rotasde", version, about = "Stochastic integrators on SO(n)")]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for path-parallel runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(
        args.experiment,
        &Overrides {
            seed: args.seed,
            threads: args.threads,
            output_dir: args.out.clone(),
        },
    );
    cfg.validate()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;

    let mut out = OutputSet::create(&cfg.output_dir)?;
    let outcome = pool.install(|| commands::run(args.experiment, &cfg, &mut out))?;

    let manifest = json!({
        "experiment": args.experiment.to_string(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "rng_algorithm": RNG_ALGORITHM,
        "threads": pool.current_num_threads(),
        "config": cfg,
        "outputs": out.files(),
        "summary": outcome.summary,
        "wall_clock_seconds": {
            "compute": outcome.timings.compute,
            "write": outcome.timings.write,
            "total": started.elapsed().as_secs_f64(),
        },
    });
    out.json("manifest.json", &manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
