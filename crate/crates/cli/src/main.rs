//! `heatbeam` — simulate a heat-conducting rod coupled to a piezoelectric
//! beam, check feedback-controller certificates, and verify the stored
//! artifacts of earlier runs.

// Validation uses `!(x > 0.0)` so that NaN is rejected; `x <= 0.0` admits it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Options;

#[derive(Parser)]
#[command(
    name = "heatbeam",
    version,
    about = "Simulator and verification toolkit for a thermo-piezoelectric rod/beam system"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for artifacts (overrides the config's choice).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the randomized state checks.
    #[arg(long, global = true, value_name = "INT", default_value_t = 0)]
    seed: u64,
    /// Suppress progress output (errors still go to stderr).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation; write the time series, report, and optional
    /// state snapshots, then check the run's invariants.
    Simulate,
    /// Print the closed-form energy constants and decay-rate ceiling for
    /// the configured material.
    Constants,
    /// Check the structural assumptions of the configured dynamic
    /// controller and write its certificate.
    CheckController,
    /// Search the static-gain box for the best certified decay rate.
    Tune,
    /// Re-run the invariant checks on a stored run directory and compare
    /// against the stored verdicts.
    Verify,
}

fn main() {
    let cli = Cli::parse();
    let opts = Options {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let outcome = match cli.command {
        Command::Simulate => commands::cmd_simulate(&opts),
        Command::Constants => commands::cmd_constants(&opts),
        Command::CheckController => commands::cmd_check_controller(&opts),
        Command::Tune => commands::cmd_tune(&opts),
        Command::Verify => commands::cmd_verify(&opts),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
