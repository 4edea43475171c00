use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{CliError, Direction, VerifyArgs};

#[derive(Parser)]
#[command(name = "riemdyn", version, about = "Newtonian, Lagrangian and Hamiltonian dynamics on Riemannian charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every initial state of a run config.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run a seeded verification suite and print its JSON report.
    Verify {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply the Legendre map or its inverse to one state.
    Legendre {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        /// `"x1,..,xn; w1,..,wn"` with `w` the velocity or the momentum.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Simulate { config } => commands::simulate(&config),
        Command::Verify { config, suite, chart, seed, report } => commands::verify(VerifyArgs { config, suite, chart, seed, report }),
        Command::Legendre { config, direction, state } => commands::legendre(&config, direction, &state),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
