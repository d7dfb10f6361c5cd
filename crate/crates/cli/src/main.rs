use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Exit codes are a scripting contract.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const VERIFICATION: u8 = 4;
    pub const MAX_ITERATIONS: u8 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
    Verification(String),
    MaxIterations(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Verification(_) => exit::VERIFICATION,
            CliError::MaxIterations(_) => exit::MAX_ITERATIONS,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Io(m)
            | CliError::Numerical(m)
            | CliError::Verification(m)
            | CliError::MaxIterations(m) => m,
        }
    }
}

impl From<dqaem::Error> for CliError {
    fn from(e: dqaem::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if matches!(e, dqaem::Error::Io { .. }) {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "dqaem", version, about = "Deterministic quantum annealing EM for mixtures of factor analyzers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set limits.max_iter=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write it with its truth sidecar.
    Generate(Common),
    /// Fit a model with EM, DAEM or DQAEM.
    Fit(Common),
    /// Run the comparison or monotonicity experiment.
    Experiment(Common),
    /// Check the engine against brute-force oracles.
    Verify(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(c) => commands::generate(&c.config, &c.overrides),
        Command::Fit(c) => commands::fit(&c.config, &c.overrides),
        Command::Experiment(c) => commands::experiment(&c.config, &c.overrides),
        Command::Verify(c) => commands::verify(&c.config, &c.overrides),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
