//! Command-line front end for the inertial proximal-point library.
//!
//! Exit codes: 0 success, 2 parameter rejection, 3 max-iter reached,
//! 4 divergence, 5 certificate failure, 64 usage, 74 output I/O.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Malformed invocation or unreadable/unparseable config: exit 64.
    Usage(String),
    /// Semantically invalid parameters or data: exit 2.
    Rejected(String),
    /// Output could not be written: exit 74.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Rejected(_) => 2,
            CliError::Io(_) => 74,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Rejected(m) | CliError::Io(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "inertial-prox",
    version,
    about = "Two-step inertial proximal point methods: validation, runs, benchmarks, certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check (theta, delta) against the convergence region and report
    /// the admissible delta interval and the coefficients c1, c2.
    Validate {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
    },
    /// Run the single configured method and write record.json and
    /// residuals.csv into the output directory.
    Run {
        /// Path to the JSON experiment config.
        config: String,
        /// Override the config's output_path.
        #[arg(long)]
        output: Option<String>,
    },
    /// Run every configured method against the shared instance and
    /// write comparison.csv.
    Bench {
        /// Path to the JSON experiment config.
        config: String,
        /// Override the config's output_path.
        #[arg(long)]
        output: Option<String>,
    },
    /// Verify the Lyapunov monotonicity certificate and the iterate
    /// rate bound on a linear monotone instance with known solution.
    Certify {
        /// Path to the JSON experiment config.
        config: String,
        /// Accept the method parameters without region validation.
        #[arg(long)]
        skip_validation: bool,
    },
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Commands::Validate { theta, delta } => commands::cmd_validate(theta, delta),
        Commands::Run { config, output } => commands::cmd_run(&config, output.as_deref()),
        Commands::Bench { config, output } => commands::cmd_bench(&config, output.as_deref()),
        Commands::Certify {
            config,
            skip_validation,
        } => commands::cmd_certify(&config, skip_validation),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
