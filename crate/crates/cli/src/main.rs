//! lrorder: exact diagonal ground states of bosonic lattice models with
//! algebraically decaying interactions.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 resummation
//! not converged (pass --allow-unconverged to proceed anyway), 4 any other
//! module error (partial results stay on disk).

/// println! that shrugs off a closed stdout (e.g. piping into `head`).
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

/// A command error tagged with its process exit code.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    err: anyhow::Error,
}

impl CliError {
    pub fn usage(err: anyhow::Error) -> Self {
        Self { code: 2, err }
    }
    pub fn unconverged(err: anyhow::Error) -> Self {
        Self { code: 3, err }
    }
    pub fn module(err: anyhow::Error) -> Self {
        Self { code: 4, err }
    }
}

#[derive(Parser)]
#[command(
    name = "lrorder",
    version,
    about = "Exact crystal ground states of long-range lattice models",
    propagate_version = true
)]
struct Cli {
    /// Worker threads (0 = all cores). Worker count never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Directory for output files (default: current directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate unit-cell classes within an extent into cells.jsonl
    EnumerateCells {
        #[command(flatten)]
        ov: Overrides,
        /// JSON run configuration; flags override file values
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Resum coupling matrices into couplings.jsonl (idempotent cache)
    Resum {
        /// Cell dump from enumerate-cells; defaults to enumerating --extent
        #[arg(long)]
        cells: Option<PathBuf>,
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ground state at a single parameter point (--x)
    GroundState {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Phase-diagram sweep over --grid; resumable per grid point
    Sweep {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-render diagram.csv and pattern SVGs from a diagram.jsonl
    Plot {
        /// diagram.jsonl produced by sweep
        #[arg(long = "in", value_name = "JSONL")]
        input: PathBuf,
    },
}

fn effective_config(path: Option<&PathBuf>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path.map(|p| p.as_path())).map_err(CliError::usage)?;
    cfg.apply(ov).map_err(CliError::usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| CliError::usage(anyhow::anyhow!(e)))?;
    }
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
    match &cli.cmd {
        Cmd::EnumerateCells { ov, config } => {
            let cfg = effective_config(config.as_ref(), ov)?;
            commands::cmd_enumerate(&cfg, &out_dir)
        }
        Cmd::Resum { cells, ov, config } => {
            let cfg = effective_config(config.as_ref(), ov)?;
            commands::cmd_resum(&cfg, cells.as_deref(), &out_dir)
        }
        Cmd::GroundState { ov, config } => {
            let cfg = effective_config(config.as_ref(), ov)?;
            commands::cmd_ground_state(&cfg, &out_dir)
        }
        Cmd::Sweep { ov, config } => {
            let cfg = effective_config(config.as_ref(), ov)?;
            commands::cmd_sweep(&cfg, &out_dir)
        }
        Cmd::Plot { input } => commands::cmd_plot(input, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
