use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_epr::scenario::Format;
use hybrid_epr::{execute, Overrides, Verb};

#[derive(Parser)]
#[command(name = "hybrid-epr", version, about = "Simulate light-mediated mechanics-atoms EPR protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario's protocol (or its sweep).
    Run(Common),
    /// Compare predicted, idealized-map and oracle EPR variances.
    Compare(Common),
    /// Derive dimensionless parameters and feasibility checks from a setup.
    Plan(Common),
    /// Run the scenario's sweep section.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle steps per Larmor period.
    #[arg(long)]
    oracle_steps: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (verb, c) = match cli.command {
        Command::Run(c) => (Verb::Run, c),
        Command::Compare(c) => (Verb::Compare, c),
        Command::Plan(c) => (Verb::Plan, c),
        Command::Sweep(c) => (Verb::Sweep, c),
    };
    let overrides = Overrides {
        out: c.out,
        format: c.format,
        seed: c.seed,
        oracle_steps: c.oracle_steps,
    };
    match execute(verb, &c.scenario, &overrides) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
