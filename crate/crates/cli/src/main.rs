//! `ergodic`: solve, certify and simulate `(s, S)` inventory policies from a
//! TOML configuration.
//!
//! Exit codes: 0 success, 2 configuration, validation or output-directory
//! error, 3 numerical or simulation failure, 4 certificate failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("{what}: {e}"),
        }
    }

    pub fn certificate(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<ergodic_core::Error> for CliError {
    fn from(e: ergodic_core::Error) -> Self {
        use ergodic_core::Error as E;
        let code = match e {
            E::Domain(_) | E::Invalid(_) => 2,
            E::Certificate(_) => 4,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ergodic",
    version,
    about = "Optimal (s,S) policies for diffusion inventory models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` in the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Simulation seed; overrides `simulation.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Dotted configuration override, e.g. `simulation.dt=1e-3`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Bracket and optimize; writes optimum.json and evaluations.csv.
    Solve,
    /// Solve and certify optimality; writes certificate.json and residuals.csv.
    Verify,
    /// Simulate the configured policy; writes simulation.json and trace.csv.
    Simulate,
    /// Simulate level-j truncations of a base policy; writes compare.csv.
    Compare,
    /// Run everything and write summary.md.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::config("--config PATH is required"))?;
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(format!("simulation.seed={seed}"));
    }
    let mut cfg = RunConfig::load(&path, &overrides)?;
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let ctx = commands::Context::new(cfg)?;
    match cli.command {
        Command::Solve => ctx.solve().map(|_| ()),
        Command::Verify => ctx.verify().map(|_| ()),
        Command::Simulate => ctx.simulate().map(|_| ()),
        Command::Compare => ctx.compare().map(|_| ()),
        Command::Report => ctx.report(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
