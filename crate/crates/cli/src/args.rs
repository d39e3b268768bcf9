use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrlfs_core::engine::RewardAssign;
use hrlfs_core::feature_state::embed::ProviderKind;

#[derive(Parser, Debug)]
#[command(name = "hrlfs", version, about = "Hierarchical multi-agent feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the full selection loop and write a JSON run report.
    Select(SelectArgs),
    /// Build the feature states and the agent tree without running the agents.
    Cluster(ClusterArgs),
    /// Compare simulated and predicted activated-agent counts on a perfect tree.
    Simulate(SimulateArgs),
    /// Fill the embedding cache for every feature of a dataset.
    Embed(EmbedArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// Classification; binary or multiclass is inferred from the labels.
    Clf,
    /// Regression.
    Reg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Remote,
    Cache,
    Zero,
}

impl From<ProviderArg> for ProviderKind {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::Remote => ProviderKind::Remote,
            ProviderArg::Cache => ProviderKind::Cache,
            ProviderArg::Zero => ProviderKind::Zero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AssignArg {
    Split,
    Broadcast,
}

impl From<AssignArg> for RewardAssign {
    fn from(a: AssignArg) -> Self {
        match a {
            AssignArg::Split => RewardAssign::Split,
            AssignArg::Broadcast => RewardAssign::Broadcast,
        }
    }
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV file with a header row; every column except the label must be numeric.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    pub label: String,
    /// Task type.
    #[arg(long, value_enum, default_value_t = TaskArg::Clf)]
    pub task: TaskArg,
    /// JSON metadata with dataset and feature descriptions [default: none, all-zero embeddings].
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProviderArgs {
    /// Embedding cache file, created if missing [default: none].
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
    /// Embedding source [default: zero].
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Base URL of an OpenAI-compatible API (remote provider only) [default: https://api.openai.com/v1].
    #[arg(long)]
    pub base_url: Option<String>,
    /// Embedding model name [default: text-embedding-3-small].
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Embedding dimension declared by the model [default: 1536].
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest mixture size tried per feature [default: 5].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Fraction of rows held out for scoring [default: 0.2].
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Weight of downstream performance against subset size in the reward [default: 0.4].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Penalty on the number of selected features [default: 0.6].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Steps of uniform random exploration [default: 200].
    #[arg(long)]
    pub explore_epochs: Option<usize>,
    /// Steps of policy optimization [default: 200].
    #[arg(long)]
    pub optimize_epochs: Option<usize>,
    /// Number of tree levels that make decisions (root = level 1) [default: all].
    #[arg(long)]
    pub level_cap: Option<usize>,
    /// How the step reward is shared by activated agents [default: split].
    #[arg(long, value_enum)]
    pub reward_assign: Option<AssignArg>,
    /// Run report path.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Also write reward and activation curves as SVG [default: none].
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tree JSON path.
    #[arg(long, default_value = "tree.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Levels of the perfect binary tree.
    #[arg(long, default_value_t = 7)]
    pub height: usize,
    /// Probability that an activated internal node activates its children.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Monte-Carlo trials.
    #[arg(long, default_value_t = 20_000)]
    pub trials: usize,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a CSV sweep over evenly spaced p in [0, 1] [default: none].
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Number of p values in the sweep.
    #[arg(long, default_value_t = 11)]
    pub sweep_points: usize,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ask a chat model for missing feature descriptions before embedding.
    #[arg(long)]
    pub complete_descriptions: bool,
    /// Chat model used for description completion.
    #[arg(long, default_value = "gpt-4o-mini")]
    pub chat_model: String,
    /// Where to write the completed metadata [default: not written].
    #[arg(long)]
    pub metadata_out: Option<PathBuf>,
}
