use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dvp::propagation::Task;

use crate::config::FlowKind;

/// Temporally consistent video processing by training a network on a single video.
///
/// Every option can also be set in a TOML file passed with --config, using the
/// sections [io], [net], [train], [propagate], [metrics] and [toy] plus a
/// top-level `seed`. Flags win over the file. Unknown keys are rejected. Run
/// any command with --print-config to see every key with its default value.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "dvp", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove flicker: train on input/processed pairs and write consistent frames.
    Stabilize(RunArgs),
    /// Spread reference-frame edits (color, style, masks) to every frame.
    Propagate(RunArgs),
    /// Score output frames for warping error and data fidelity.
    Evaluate(RunArgs),
    /// Run the two-dimensional toy experiment and plot its snapshots.
    Toy(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Color,
    Style,
    Segmentation,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Color => Task::Color,
            TaskArg::Style => Task::Style,
            TaskArg::Segmentation => Task::Segmentation,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,

    /// Original input frames.
    #[arg(long, value_name = "DIR")]
    pub input_dir: Option<PathBuf>,
    /// Per-frame processed frames (stabilize) or reference for fidelity (evaluate).
    #[arg(long, value_name = "DIR")]
    pub processed_dir: Option<PathBuf>,
    /// Frames to score (evaluate only).
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Root of the artifact tree.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Glob selecting frame files [default: *.png].
    #[arg(long)]
    pub pattern: Option<String>,

    /// Training epochs [default: 25].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Dual-head training with confidence routing [default: off].
    #[arg(long, overrides_with = "no_irt")]
    pub irt: bool,
    /// Single-head training.
    #[arg(long, overrides_with = "irt")]
    pub no_irt: bool,
    /// Confidence distance floor [default: 0.02].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Stop once the epoch loss curve flattens.
    #[arg(long)]
    pub auto_stop: bool,
    /// Train the first half of the epochs at half resolution.
    #[arg(long)]
    pub coarse_to_fine: bool,
    /// Start from saved weights.
    #[arg(long, value_name = "FILE")]
    pub init_checkpoint: Option<PathBuf>,
    /// Adam learning rate [default: 1e-4; toy 1e-3].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Frames per independently trained clip [default: 300].
    #[arg(long)]
    pub window: Option<usize>,
    /// Clips trained concurrently [default: 1].
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Flow source for warping metrics [default: none].
    #[arg(long, value_enum)]
    pub flow: Option<FlowKind>,
    /// CSV manifest (`t,s,path`) of precomputed flows; implies --flow manifest.
    #[arg(long, value_name = "FILE")]
    pub flow_manifest: Option<PathBuf>,

    /// Reference targets for propagate, one file per reference frame.
    #[arg(long, value_name = "DIR")]
    pub reference_dir: Option<PathBuf>,
    /// Frame indices of the reference targets, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub reference_frames: Option<Vec<usize>>,
    /// Propagation task [default: color].
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Training iterations per propagation step [default: 100].
    #[arg(long)]
    pub k: Option<usize>,
    /// Train on the references only instead of growing a pseudo-label queue.
    #[arg(long)]
    pub no_pppl: bool,

    /// Seed for every random choice [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn irt(&self) -> Option<bool> {
        match (self.irt, self.no_irt) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}
