//! `sandpile`: stochastic sandpile experiments on the command line.
//!
//! Every run is reproducible: the same subcommand, parameters, and seed
//! produce byte-identical output files, including when replicas execute
//! in parallel.

mod commands;
mod output;
mod spec;
mod verify;

use std::path::Path;

use clap::Parser;

use sandpile_core::SandpileError;

#[derive(Debug, Parser)]
#[command(
    name = "sandpile",
    version,
    about = "Stochastic sandpile simulation and exact analytics",
    propagate_version = true
)]
enum Cli {
    /// Exit probabilities of the full segment plus one particle.
    Sgr(commands::SgrArgs),
    /// Hole-location probabilities when two particles are lost.
    Holes(commands::HolesArgs),
    /// Transition matrix over the recurrent states.
    Transition(commands::TransitionArgs),
    /// Stationary distribution over the recurrent states.
    Stationary(commands::StationaryArgs),
    /// Visit frequencies of the driven chain on a segment.
    Mcmc(commands::McmcArgs),
    /// Fully-occupied-window probabilities across segment lengths.
    Marginals(commands::MarginalsArgs),
    /// Exact brute-force absorption probabilities vs the closed forms.
    OracleCheck(commands::OracleCheckArgs),
    /// Stationary density on a 2D box across p-toppling parameters.
    Density2d(commands::Density2dArgs),
    /// Height-3 spanning probability on a 2D box.
    Percolation(commands::PercolationArgs),
    /// Stabilize a pile dropped at the origin of the integer line.
    SingleSource(commands::SingleSourceArgs),
    /// Cross-validate all routes and print a pass/fail table.
    Verify(verify::VerifyArgs),
}

/// CLI-level error with its exit code and machine-readable record.
#[derive(Debug)]
pub enum CliError {
    InvalidSpec(String),
    Core(SandpileError),
    Io { path: String, message: String },
    ChecksFailed { failed: usize, summary: String },
}

impl CliError {
    fn invalid(message: String) -> CliError {
        CliError::InvalidSpec(message)
    }

    fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// 2 invalid spec, 3 budget exceeded, 4 state space too large,
    /// 1 anything else.
    fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidSpec(_) => 2,
            CliError::Core(SandpileError::InvalidParameter(_)) => 2,
            CliError::Core(SandpileError::BudgetExceeded { .. }) => 3,
            CliError::Core(SandpileError::StateSpaceTooLarge { .. }) => 4,
            _ => 1,
        }
    }

    fn record(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::InvalidSpec(m) => ("invalid-spec", m.clone()),
            CliError::Core(e) => (
                match e {
                    SandpileError::BudgetExceeded { .. } => "budget-exceeded",
                    SandpileError::StateSpaceTooLarge { .. } => "state-space-too-large",
                    SandpileError::InvalidParameter(_) => "invalid-spec",
                    _ => "core-error",
                },
                e.to_string(),
            ),
            CliError::Io { path, message } => ("io-error", format!("{path}: {message}")),
            CliError::ChecksFailed { failed, summary } => (
                "checks-failed",
                format!("{failed} checks failed; {summary}"),
            ),
        };
        serde_json::json!({
            "error": { "kind": kind, "message": message, "exit_code": self.exit_code() }
        })
    }
}

impl From<SandpileError> for CliError {
    fn from(err: SandpileError) -> CliError {
        CliError::Core(err)
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    match cli {
        Cli::Sgr(args) => commands::run_sgr(args),
        Cli::Holes(args) => commands::run_holes(args),
        Cli::Transition(args) => commands::run_transition(args),
        Cli::Stationary(args) => commands::run_stationary(args),
        Cli::Mcmc(args) => commands::run_mcmc(args),
        Cli::Marginals(args) => commands::run_marginals(args),
        Cli::OracleCheck(args) => commands::run_oracle_check(args),
        Cli::Density2d(args) => commands::run_density2d(args),
        Cli::Percolation(args) => commands::run_percolation(args),
        Cli::SingleSource(args) => commands::run_single_source(args),
        Cli::Verify(args) => verify::run_verify(args),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => eprintln!("{summary}"),
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::to_string(&err.record()).expect("error serializes")
            );
            std::process::exit(err.exit_code());
        }
    }
}
