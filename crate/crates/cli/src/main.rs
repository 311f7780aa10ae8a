//! `glassecho`: echo simulations, linewidth sweeps and fits from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure. `GLASSECHO_THREADS` caps the worker threads.

mod config;
mod error;
mod run;
mod table;
mod units;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::run::{FitKind, Job, SimKind, SweepKind, Task};

#[derive(Parser)]
#[command(name = "glassecho", version, about = "Photon-echo simulation and linewidth fitting for erbium-doped glass")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set environment.field="2 T"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Main output file.
    #[arg(long, short)]
    out: PathBuf,
    /// Run manifest path [default: next to the output, `*.manifest.json`].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated echo trace.
    Simulate {
        kind: SimKind,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to a data file and write a JSON report.
    Fit {
        kind: FitKind,
        /// Data file; overrides `input.path`.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Model curve at the input abscissae [default: `*.curve.csv`].
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the effective linewidth over a field or temperature grid.
    Sweep {
        quantity: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a run from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn job(task: Task, common: Common, input: Option<PathBuf>, curve: Option<PathBuf>) -> CliResult<Job> {
    let mut config = config::load(common.config.as_deref(), &common.sets)?;
    if let Some(p) = input {
        config.input.path = Some(p);
    }
    // manifests must not depend on the working directory
    if let Some(p) = &config.input.path {
        config.input.path = Some(absolute(p)?);
    }
    Ok(Job {
        task,
        config,
        out: common.out,
        curve,
        manifest: common.manifest,
    })
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("GLASSECHO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GLASSECHO_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let job = match cli.command {
        Command::Simulate { kind, common } => job(Task::Simulate(kind), common, None, None)?,
        Command::Sweep { quantity, common } => job(Task::Sweep(quantity), common, None, None)?,
        Command::Fit { kind, input, curve, common } => job(Task::Fit(kind), common, input, curve)?,
        Command::Replay { manifest, out, curve } => {
            let m = run::read_manifest(&manifest)?;
            Job {
                task: m.task,
                config: m.config,
                out,
                curve,
                manifest: None,
            }
        }
    };
    run::run(job)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
