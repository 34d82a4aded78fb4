//! `gotalign`: align embedding sets by graph optimal transport, train patch
//! masks, generate synthetic instances, and score prediction fairness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence or
//! divergence failure.

mod commands;
mod exit;

use clap::{Parser, Subcommand};

use commands::{align, fairness, synth, train_mask};

#[derive(Parser)]
#[command(name = "gotalign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align source patches to target labels with fused graph transport.
    Align(align::AlignArgs),
    /// Compute group fairness metrics from a prediction CSV.
    Fairness(fairness::FairnessArgs),
    /// Generate a deterministic synthetic alignment instance.
    Synth(synth::SynthArgs),
    /// Train a sigmoid patch mask and export it with its loss trace.
    TrainMask(train_mask::TrainMaskArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => exit::USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Align(args) => align::run(&args),
        Command::Fairness(args) => fairness::run(&args),
        Command::Synth(args) => synth::run(&args),
        Command::TrainMask(args) => train_mask::run(&args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
