//! The `stiffsense` binary: synthesize grasp datasets, train and evaluate
//! stiffness models, replay traces with latency ledgers, and exercise the
//! sensor frame protocol.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stiffsense_cli::cmd;
use stiffsense_cli::config;

#[derive(Parser)]
#[command(
    name = "stiffsense",
    version,
    about = "Tactile stiffness sensing toolkit",
    long_about = "Tactile stiffness sensing toolkit.\n\n\
        Exit codes: 0 success, 2 bad invocation or config, 3 unusable input \
        data, 4 a requested quality gate failed."
)]
struct Cli {
    /// TOML settings file; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a grasp dataset directory.
    Synth(cmd::synth::SynthArgs),
    /// Train a stiffness model on a dataset.
    Train(cmd::train::TrainArgs),
    /// Score a model against a dataset.
    Eval(cmd::eval::EvalArgs),
    /// Replay traces end to end with latency ledgers.
    Stream(cmd::stream::StreamArgs),
    /// Time single-window inference.
    Bench(cmd::bench::BenchArgs),
    /// Encode, decode, or fuzz sensor frame streams.
    #[command(subcommand)]
    Wire(cmd::wire::WireCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match config::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let result = match &cli.cmd {
        Cmd::Synth(a) => cmd::synth::run(a, &file),
        Cmd::Train(a) => cmd::train::run(a, &file),
        Cmd::Eval(a) => cmd::eval::run(a, &file),
        Cmd::Stream(a) => cmd::stream::run(a, &file),
        Cmd::Bench(a) => cmd::bench::run(a, &file),
        Cmd::Wire(a) => cmd::wire::run(a, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
