//! Batch front end: subcommand + configuration file in, reproducible
//! data artifacts out.
//!
//! Exit codes: 0 success, 2 configuration error, 3 resource cap
//! exceeded, 4 internal invariant violation, 1 I/O or other failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qperc",
    version,
    about = "Spectral simulation of quantum site percolation on periodic graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrated density of states (exhaustion or trace-formula estimator)
    Ids(RunArgs),
    /// Sup-norm IDS distance between two boundary conditions
    BcCompare(RunArgs),
    /// Spectral vs closed-walk moments cross-check
    Moments(RunArgs),
    /// Truncated finite-cluster eigenvalue catalog
    Enumerate(RunArgs),
    /// Jump height estimate at a fixed energy
    Jumps(RunArgs),
    /// Compactly supported eigenstates at a fixed energy
    Molecular(RunArgs),
    /// Parse and validate a configuration, print the resolved form
    ValidateConfig { config: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration file
    config: PathBuf,
    /// Also write companion gnuplot scripts next to the data
    #[arg(long)]
    emit_gnuplot_hints: bool,
}

fn run(cli: Cli) -> Result<(), qperc_core::Error> {
    config::init_workers();
    let (label, args) = match &cli.command {
        Command::Ids(a) => ("ids", a),
        Command::BcCompare(a) => ("bc-compare", a),
        Command::Moments(a) => ("moments", a),
        Command::Enumerate(a) => ("enumerate", a),
        Command::Jumps(a) => ("jumps", a),
        Command::Molecular(a) => ("molecular", a),
        Command::ValidateConfig { config } => {
            let resolved = RunConfig::load(config, false)?;
            print!("{}", resolved.resolved_text());
            println!("# digest = {}", resolved.digest());
            return Ok(());
        }
    };
    let resolved = RunConfig::load(&args.config, args.emit_gnuplot_hints)?;
    let written = match label {
        "ids" => commands::cmd_ids(&resolved)?,
        "bc-compare" => commands::cmd_bc_compare(&resolved)?,
        "moments" => commands::cmd_moments(&resolved)?,
        "enumerate" => commands::cmd_enumerate(&resolved)?,
        "jumps" => commands::cmd_jumps(&resolved)?,
        "molecular" => commands::cmd_molecular(&resolved)?,
        _ => unreachable!(),
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
