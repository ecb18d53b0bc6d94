use std::path::PathBuf;
use std::process::ExitCode;

use bkl_lab::{run, Mode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bkl-lab", version, about = "Experiments on critical branching Lévy processes killed at the origin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicas and write one JSON record per replica.
    Simulate(RunArgs),
    /// Survival probability of the unkilled process.
    Ode(RunArgs),
    /// Semilinear half-line problems and their functionals.
    Pde(RunArgs),
    /// Blow-up boundary problem by shooting.
    Shoot(RunArgs),
    /// Monte Carlo tail and conditional-law estimates.
    Estimate(RunArgs),
    /// Run the acceptance suite.
    Verify(RunArgs),
    /// Write (x, y, yerr) triples for plotting.
    EmitPlotData(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Ode(a) => (Mode::Ode, a),
        Command::Pde(a) => (Mode::Pde, a),
        Command::Shoot(a) => (Mode::Shoot, a),
        Command::Estimate(a) => (Mode::Estimate, a),
        Command::Verify(a) => (Mode::Verify, a),
        Command::EmitPlotData(a) => (Mode::EmitPlotData, a),
    };
    match run(mode, &args.config, args.seed, args.out.as_deref()) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
