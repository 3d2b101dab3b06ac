use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stage", version, about = "Spatio-temporal graph attention over actor and object detections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its best checkpoint and history.
    Train(TrainArgs),
    /// Evaluate a checkpoint with frame-level mAP.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on random configurations.
    Gradcheck(GradcheckArgs),
    /// Print the parameter count of a configuration.
    Params(ModelArgs),
    /// Print the inference cost of a configuration for one clip.
    Flops(FlopsArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    MultiLabel,
    SingleLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoxesArg {
    /// Labeled actor boxes.
    Gt,
    /// Unlabeled detections above `--score-thresh`.
    Detected,
}

/// Model shape overrides shared by several commands.
#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Named configuration: stage-i3d, stage-r101, stage-slowfast or synthetic.
    #[arg(long, default_value = "stage-i3d")]
    pub preset: String,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Raw actor feature width.
    #[arg(long)]
    pub actor_width: Option<usize>,
    /// Raw object feature width.
    #[arg(long)]
    pub object_width: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// One of full, no-proximity, no-temporal, no-actor-actor, no-object-object,
    /// transformer, feature-distance.
    #[arg(long)]
    pub ablate: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Clips per window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Direct temporal field in clips (odd).
    #[arg(long)]
    pub rf: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dropout keep probability.
    #[arg(long)]
    pub keep: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub decay_patience: Option<usize>,
    #[arg(long)]
    pub stop_patience: Option<usize>,
    /// Windows per optimizer step.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub label_iou: Option<f64>,
    #[arg(long, value_enum)]
    pub eval_boxes: Option<BoxesArg>,
    #[arg(long)]
    pub score_thresh: Option<f64>,
    #[arg(long)]
    pub min_class_examples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock budget in seconds; training stops after the epoch that exceeds it.
    #[arg(long)]
    pub time_budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Classes with fewer ground-truth boxes are left out of the mean.
    #[arg(long)]
    pub min_class_examples: Option<usize>,
    /// CSV with `class_id,group` rows.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Text file with one class name per line.
    #[arg(long)]
    pub class_names: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub eval_boxes: Option<BoxesArg>,
    #[arg(long)]
    pub score_thresh: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of random configurations.
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 4)]
    pub actors: usize,
    #[arg(long, default_value_t = 25)]
    pub objects: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML). Without it the built-in two-rule benchmark is used.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}
