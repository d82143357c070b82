use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "binet", version, about = "Sequential sharing of bilocal nonlocality with unsharp measurements")]
struct Cli {
    /// Worker threads for parallel sweeps and suites (default: available parallelism).
    #[arg(long, env = "BINET_JOBS", global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Brute-force one configuration and compare with its closed form.
    Simulate(RunConfig),
    /// Critical precision of each successive round.
    Critical(RunConfig),
    /// Largest number of rounds that can violate.
    MaxRounds(RunConfig),
    /// Entanglement at which a number of rounds first becomes possible.
    Threshold(RunConfig),
    /// Achievable numbers of Alices and Charus.
    Frontier(RunConfig),
    /// Evaluate max rounds or the inequality value over a grid.
    Sweep(RunConfig),
    /// Run the seeded oracle-equivalence suite.
    Verify(RunConfig),
}

type Handler<W> = fn(&RunConfig, &mut W) -> Result<(), CliError>;

fn run<W: Write>(command: &Command, out: &mut W) -> Result<(), CliError> {
    let (flags, run): (&RunConfig, Handler<W>) = match command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Critical(c) => (c, commands::critical),
        Command::MaxRounds(c) => (c, commands::max_rounds_cmd),
        Command::Threshold(c) => (c, commands::threshold),
        Command::Frontier(c) => (c, commands::frontier),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Verify(c) => (c, commands::verify),
    };
    let cfg = RunConfig::resolve(flags)?;
    run(&cfg, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    let stdout = std::io::stdout();
    let result = pool.install(|| run(&cli.command, &mut stdout.lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
