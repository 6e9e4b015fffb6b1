use clap::{Parser, Subcommand};
use std::path::PathBuf;
use westerly_cli::Mode;

#[derive(Parser)]
#[command(
    name = "westerly",
    about = "Boundary-layer solver and verification harness for rotating gyre flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output] dir from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel verbs (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// March the transformed equation and write the solution field.
    Solve(Common),
    /// Check the barrier sandwich on a solved or stored field.
    Verify(Common),
    /// Reconstruct physical velocity fields and decay fits.
    Fields(Common),
    /// Solve the self-similar profile equation by shooting.
    Ode(Common),
    /// Evaluate a ladder of slope parameters in parallel.
    Sweep(Common),
    /// March a regularisation ladder and test contraction.
    Convergence(Common),
}

fn main() {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Solve(c) => (Mode::Solve, c),
        Command::Verify(c) => (Mode::Verify, c),
        Command::Fields(c) => (Mode::Fields, c),
        Command::Ode(c) => (Mode::Ode, c),
        Command::Sweep(c) => (Mode::Sweep, c),
        Command::Convergence(c) => (Mode::Convergence, c),
    };
    if let Err(e) = westerly_cli::run(mode, &common.config, common.out, common.workers) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
