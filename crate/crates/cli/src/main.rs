use anyhow::Result;
use clap::{Parser, Subcommand};

use usbf_cli::commands::{
    cmd_beamform, cmd_bench, cmd_eval, cmd_mask, cmd_render, cmd_simulate, cmd_train,
    BeamformArgs, BenchArgs, EvalArgs, MaskArgs, RenderArgs, SimulateArgs, TrainArgs,
};

/// Ultrasound beamforming workbench: simulate RF data, subsample it,
/// reconstruct with delay-and-sum or the learned beamformer, and compare.
#[derive(Parser)]
#[command(name = "usbf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom RF dataset onto disk.
    Simulate(SimulateArgs),
    /// Generate and write a subsampling mask file.
    Mask(MaskArgs),
    /// Reconstruct B-mode images for a dataset split.
    Beamform(BeamformArgs),
    /// Train the learned beamformer on a dataset.
    Train(TrainArgs),
    /// Summarize DAS vs learned-beamformer quality per subsampling factor.
    Eval(EvalArgs),
    /// Measure per-depth-plane inference latency.
    Bench(BenchArgs),
    /// Render a single frame to an image file.
    Render(RenderArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Mask(a) => cmd_mask(&a),
        Command::Beamform(a) => cmd_beamform(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Render(a) => cmd_render(&a),
    }
}
