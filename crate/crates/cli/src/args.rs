use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "logitlab", version, about = "Logit statistics, target manipulation and capacity analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Max-logit and logit-gap distributions, gap/accuracy curve, error profile.
    Stats(StatsArgs),
    /// Average overlap, within-class permuted overlap, rank divergence, cosine neighbours.
    Overlap(OverlapArgs),
    /// Write manipulated distillation targets.
    Manipulate(ManipulateArgs),
    /// Surrogate-model grids: loss surface, admissibility thresholds, gap shrinkage.
    Analytic(AnalyticArgs),
    /// Synthetic linear-response gap-shift experiment over a beta grid.
    Response(ResponseArgs),
    /// Manifold capacity, radius, dimension and centre correlation.
    Mftma(MftmaArgs),
    /// Render SVG figures from CSV produced by earlier runs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for logitlab::Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => logitlab::Format::Text,
            FormatArg::Binary => logitlab::Format::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Plus,
    Minus,
}

impl From<BranchArg> for logitlab::surrogate::Branch {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Plus => logitlab::surrogate::Branch::Plus,
            BranchArg::Minus => logitlab::surrogate::Branch::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(name = "fix_k_permute")]
    FixKPermute,
    #[value(name = "fix_k_average")]
    FixKAverage,
    #[value(name = "correct_fix_1")]
    CorrectFix1,
    Hybrid,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,

    /// Matrix file format for inputs and matrix outputs.
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub logits: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub flags: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
    /// Histogram bin width for the max-logit and gap distributions.
    #[arg(long, default_value_t = 0.25)]
    pub bin_width: f64,
    /// Bin width of the gap/accuracy curve.
    #[arg(long, default_value_t = 0.25)]
    pub gap_bin_width: f64,
    /// Smallest bin population of the gap/accuracy curve.
    #[arg(long, default_value_t = 50)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Two logit files: model A then model B.
    #[arg(long, num_args = 1, required = true)]
    pub logits: Vec<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
    /// Required with --labels (within-class permutation).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deepest rank for the overlap curve (default: number of classes).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Rank-divergence threshold as a fraction of the class size.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Row of model A whose cosine neighbours are listed.
    #[arg(long)]
    pub seed_row: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
}

#[derive(Debug, Args)]
pub struct ManipulateArgs {
    /// Source logits; hybrid takes the value source then the index source.
    #[arg(long, num_args = 1, required = true)]
    pub logits: Vec<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub output: Output,
    /// Emit the mean-field loss surface.
    #[arg(long)]
    pub surface: bool,
    /// Emit admissibility thresholds for N = 3..=n-max.
    #[arg(long)]
    pub thresholds: bool,
    /// Emit the predicted gap-shrinkage grid.
    #[arg(long)]
    pub shrinkage: bool,
    #[arg(long, default_value_t = 10)]
    pub n_classes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub error_rate: f64,
    #[arg(long, value_enum, default_value = "plus")]
    pub branch: BranchArg,
    #[arg(long, default_value_t = 0.5)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 12.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 100)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega_correct: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega_wrong: f64,
}

#[derive(Debug, Args)]
pub struct ResponseArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_data: usize,
    #[arg(long, default_value_t = 100)]
    pub n_feats: usize,
    #[arg(long, default_value_t = 10)]
    pub n_classes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub error_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_enum, default_value = "plus")]
    pub branch: BranchArg,
    #[arg(long, default_value_t = 3.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 8)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct MftmaArgs {
    /// File listing one manifold matrix per line (rows are points).
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    /// Project each manifold onto the null space of the other centroids first.
    #[arg(long)]
    pub project: bool,
    /// Random dichotomies for the empirical capacity (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub dichotomies: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding CSV from earlier runs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
