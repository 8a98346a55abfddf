//! Command-line workflows over the beamforming library: dataset simulation,
//! mask generation, reconstruction, training, evaluation, latency
//! benchmarking, and image rendering.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod maskio;
pub mod pgm;
pub mod report;
pub mod rfio;

pub use commands::{
    cmd_beamform, cmd_bench, cmd_eval, cmd_mask, cmd_render, cmd_simulate, cmd_train,
    simulate_dataset, BeamformArgs, BenchArgs, EvalArgs, MaskArgs, RenderArgs, SimulateArgs,
    TrainArgs,
};
pub use config::Config;
pub use dataset::Dataset;
