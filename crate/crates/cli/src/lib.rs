//! Command-line driver for the `dbb` binary: configuration, subcommands and
//! reproducible file emission.

// `!(x < tol)` is used on purpose: a NaN statistic must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dbb_core::dynamics_bound::Regime;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "dbb",
    version,
    about = "Bohmian trajectories of a spin-1/2 particle released from a spherical box"
)]
pub struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the trajectory ensemble (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Dump the full paths of the first K trajectories.
    #[arg(long, global = true, value_name = "K", default_value_t = 0)]
    pub paths: usize,
    /// Exit with a non-zero code when a tolerance or goodness-of-fit check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound orbit (closed form and integrated) plus the angular-frequency table.
    BoundOrbit {
        /// Use the relativistic velocity field.
        #[arg(long)]
        relativistic: bool,
    },
    /// Radial profiles of the released wave function.
    FreeEvolve {
        /// Reduced time hbar (t - t0)/m of a profile; repeatable.
        #[arg(long = "tau", value_name = "TAU")]
        taus: Vec<f64>,
    },
    /// Monte Carlo time-of-flight experiment.
    TofRun {
        /// Overrides the configured number of trajectories.
        #[arg(short = 'n', long = "trajectories", value_name = "N")]
        trajectories: Option<usize>,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

/// Effective configuration: file (or defaults) with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    match &cli.command {
        Command::BoundOrbit { relativistic: true } => cfg.bound.regime = Regime::Relativistic,
        Command::FreeEvolve { taus } if !taus.is_empty() => cfg.free.taus = taus.clone(),
        Command::TofRun { trajectories: Some(n) } => cfg.n_trajectories = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command, printing its report to stdout.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if matches!(cli.threads, Some(0)) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let cfg = resolve_config(cli)?;
    let opts = commands::Options {
        threads: cli.threads,
        paths: cli.paths,
    };
    let report = match cli.command {
        Command::BoundOrbit { .. } => commands::bound_orbit(&cfg)?,
        Command::FreeEvolve { .. } => commands::free_evolve(&cfg)?,
        Command::TofRun { .. } => commands::tof_run(&cfg, &opts)?,
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml()?);
            return Ok(());
        }
    };
    for line in &report.lines {
        println!("{line}");
    }
    for failure in &report.verification_failures {
        eprintln!("check failed: {failure}");
    }
    if cli.strict && !report.verification_failures.is_empty() {
        return Err(CliError::Verification(report.verification_failures.join("; ")));
    }
    Ok(())
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
