use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedra_cli::commands;

/// Federated-learning robustness simulator.
#[derive(Parser)]
#[command(name = "fedra-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and summary.json.
    Simulate {
        /// Path to a JSON experiment config ({} selects all defaults).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the same experiment once per value of one parameter.
    Sweep {
        /// Path to the base JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Parameter to vary: alpha_q, rule, attack, ratio_mode, gamma,
        /// or m_tilde_override.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values for the parameter.
        #[arg(long)]
        values: String,
        /// Output directory; each value gets a subdirectory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the self-check suite and print a pass/fail table.
    Verify {
        /// Optional path for a JSON copy of the report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => commands::cmd_simulate(config, *seed, out),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => commands::cmd_sweep(config, param, values, out),
        Command::Verify { report } => commands::cmd_verify(report.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
