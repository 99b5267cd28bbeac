use std::io::{self, Write};

use clap::{Parser, Subcommand};
use declab::commands::{self, GenerateArgs, SimulateArgs, SweepArgs, TrainArgs};

/// Decoding-strategy lab: n-gram text generation and frame-world rollouts.
#[derive(Debug, Parser)]
#[command(name = "declab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a character n-gram model and save it as JSON
    Train(TrainArgs),
    /// Generate one sequence from a saved model
    Generate(GenerateArgs),
    /// Run a sampler grid and write one CSV row per configuration
    Sweep(SweepArgs),
    /// Roll out the frame world model across a top-k grid
    Simulate(SimulateArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DECLAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a, &mut out),
        Command::Generate(a) => commands::generate(a, &mut out),
        Command::Sweep(a) => commands::sweep(a, &mut out),
        Command::Simulate(a) => commands::simulate(a, &mut out),
    };
    let _ = out.flush();
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
