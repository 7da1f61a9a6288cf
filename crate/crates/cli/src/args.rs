use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergoscene_core::data::RoomTemplate;
use ergoscene_core::ExpertKind;
use ergoscene_lab::Variant;

#[derive(Debug, Parser)]
#[command(name = "ergoscene", version, about = "Indoor layout synthesis with expert-knowledge losses")]
pub struct Cli {
    /// Log filter, e.g. `info` or `ergoscene_lab=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    /// Category taxonomy JSON; the built-in taxonomy if omitted.
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter an interchange corpus and derive its codec bounds.
    Preprocess(PreprocessArgs),
    /// Write a procedurally generated corpus.
    SynthCorpus(SynthArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Continue training a model on another corpus.
    Finetune(FinetuneArgs),
    /// Sample layouts from a trained model.
    Generate(GenerateArgs),
    /// Ergonomic report, gradients and intersection loss of layouts.
    Score(ScoreArgs),
    /// Train every loss variant and compare their samples.
    Ablate(AblateArgs),
    /// Top-view SVG of every layout in a file.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON map from raw category names to taxonomy names.
    #[arg(long)]
    pub grouping: Option<PathBuf>,
    /// Doors farther than this from every wall are dropped (m).
    #[arg(long)]
    pub door_threshold: Option<f64>,
    /// Fraction of untagged rooms assigned to validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Drop objects of unknown categories instead of failing.
    #[arg(long)]
    pub drop_unknown: bool,
    /// Also write the category order derived from the training rooms.
    #[arg(long)]
    pub emit_order: bool,
    #[arg(long, default_value_t = 256)]
    pub resolution: u32,
    /// Seed of the hash-based train/validation split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Room template; repeat to mix templates with `n` rooms each.
    #[arg(long, default_value = "bedroom")]
    pub template: Vec<RoomTemplate>,
    #[arg(long)]
    pub poor_fraction: Option<f64>,
    #[arg(long)]
    pub sloppy_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// 4 layers, 4 heads, width 128.
    Desk,
    /// 12 layers, 8 heads, width 256.
    Paper,
}

/// Training options; flags override the config file, which overrides the
/// profile defaults.
#[derive(Debug, Args, Clone)]
pub struct TrainOpts {
    /// JSON or TOML training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: Profile,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub finetune_lr: Option<f64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub expert: Option<ExpertKind>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub augmentations: Option<usize>,
    #[arg(long)]
    pub sigma_window: Option<f64>,
    /// Scenes sampled after every epoch to log the mean expert score.
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Interchange corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Run directory or checkpoint of the base model.
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

/// Sampler options shared by generation and ablations.
#[derive(Debug, Args, Clone)]
pub struct SamplerOpts {
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub resample_limit: Option<usize>,
    #[arg(long)]
    pub restart_budget: Option<usize>,
    #[arg(long)]
    pub area_ratio_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Run directory or checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Interchange file whose rooms, doors and windows condition the scenes,
    /// cycled if shorter than `n`.
    #[arg(long)]
    pub conditioned_on: Option<PathBuf>,
    /// Also render every scene.
    #[arg(long)]
    pub svg: bool,
    /// Skip collision checks while sampling.
    #[arg(long)]
    pub no_collision_checks: bool,
    #[command(flatten)]
    pub sampler: SamplerOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Interchange file.
    #[arg(long)]
    pub layout: PathBuf,
    /// Output directory; the report goes to stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scenes sampled per variant.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Variants to train; all four if omitted.
    #[arg(long)]
    pub variants: Vec<Variant>,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[command(flatten)]
    pub sampler: SamplerOpts,
    /// Keep collision checks on while sampling.
    #[arg(long)]
    pub collision_checks: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per meter.
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    #[arg(long)]
    pub no_labels: bool,
}
