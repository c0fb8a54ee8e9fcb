//! Experiment runner for the quadruped configuration-sampling library.
//!
//! Reads a TOML experiment spec, resolves the model set, and writes a run
//! directory containing `manifest.json`, per-epoch summaries, and metric
//! CSV files. Outputs are deterministic for a given spec and seed list,
//! independent of the worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod run;
mod spec;

use spec::{ExperimentSpec, Mode};

#[derive(Parser)]
#[command(name = "uniquad", version, about = "Quadruped sampling-strategy experiment runner")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec file.
    Run {
        /// Path to the TOML experiment spec.
        spec: PathBuf,
        /// Override the seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory from the spec.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the stand-admission audit from a spec's [audit] section.
    Audit {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a spec file without running anything.
    Validate { spec: PathBuf },
}

fn load(
    path: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(s) = seed {
        spec.seeds = vec![s];
    }
    if let Some(o) = out {
        spec.out_dir = o;
    }
    if let Some(m) = mode {
        spec.mode = m;
    }
    spec.validate()
        .with_context(|| format!("invalid spec {}", path.display()))?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: failed to configure {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run { spec, seed, out } => {
            load(spec, *seed, out.clone(), None).and_then(|s| run::run(&s))
        }
        Command::Audit { spec, seed, out } => {
            load(spec, *seed, out.clone(), Some(Mode::StandAudit)).and_then(|s| run::run(&s))
        }
        Command::Validate { spec } => load(spec, None, None, None).map(|s| {
            println!("ok: {:?} mode, {} seed(s)", s.mode, s.seeds.len());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
