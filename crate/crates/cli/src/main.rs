//! `patchsim`: command-line driver for the contact process with sexual
//! reproduction on a metapopulation torus.
//!
//! Every command writes a CSV file (`--out`, default `<command>.csv`) and a
//! manifest `<out>.manifest.toml` recording the resolved flags, seed,
//! version, wall times and outputs. Passing a manifest back through
//! `--config` reproduces the run; flags given on the command line override
//! config values.

mod commands;
mod config;
mod csv_out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BoundsArgs, DriftScanArgs, DualArgs, MeanfieldArgs, PercolationArgs, SimulateArgs, SweepArgs};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "PATCHSIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "patchsim", version, about = "Contact process with sexual reproduction on a metapopulation torus")]
struct Cli {
    /// TOML config of flag values (or a manifest from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for replica fan-out. Results do not depend on it.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the mean-field ODE. CSV columns: t,u.
    Meanfield(MeanfieldArgs),
    /// Survival replicas of the patch-count chain from one full patch.
    /// CSV columns: replica,survived,extinction_time,terminal_time,events.
    Simulate(SimulateArgs),
    /// Survival over a list of dispersal ranges with the analytic bound.
    /// CSV columns: m,replicas,survived,point,ci_halfwidth,bound,collision_exact,collision_bound.
    Sweep(SweepArgs),
    /// Dual process statistics. CSV columns (zeta):
    /// replica,extinct,first_event,explored; (full):
    /// replica,extinct,collided,max_family,duality_ok.
    Dual(DualArgs),
    /// Closed-form extinction bounds for long dispersal ranges. CSV columns:
    /// a,b,n,m,mean_emigrants,collision_exact,collision_bound,survival_bound.
    Bounds(BoundsArgs),
    /// Exhaustive drift scan of one lemma (or `all`). CSV columns:
    /// lemma,a,b,n,target,states,margin,argmin_i,argmin_j,leading_margin,leading_argmin_i,leading_argmin_j,pass.
    DriftScan(DriftScanArgs),
    /// Oriented site percolation from the origin. CSV columns:
    /// replica,survived,depth,truncated.
    Percolation(PercolationArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    /// A drift scan completed and at least one lemma failed.
    #[error("{0}")]
    ScanFail(String),
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::ScanFail(_) => 4,
            CliError::Check(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<patchsim::Error> for CliError {
    fn from(e: patchsim::Error) -> Self {
        use patchsim::Error as E;
        match e {
            E::InvalidParams(_) | E::Domain(_) | E::DegenerateRegion { .. } | E::Coverage { .. } => {
                CliError::Usage(e.to_string())
            }
            E::NumericalInstability { .. }
            | E::Runaway { .. }
            | E::RateDrift { .. }
            | E::SeamTouched { .. }
            | E::WindowTooLarge { .. }
            | E::Explosion { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.into())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Other(e.into()))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Meanfield(args) => commands::meanfield(args, config),
        Command::Simulate(args) => commands::simulate(args, config),
        Command::Sweep(args) => commands::sweep(args, config),
        Command::Dual(args) => commands::dual(args, config),
        Command::Bounds(args) => commands::bounds(args, config),
        Command::DriftScan(args) => commands::drift_scan(args, config),
        Command::Percolation(args) => commands::percolation(args, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
