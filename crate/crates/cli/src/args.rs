use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qgw", version, about = "Quantized Gromov-Wasserstein matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 1 forces sequential execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,

    /// JSON output path (match report or eval metrics).
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a pointed partition of one space.
    Partition(PartitionArgs),
    /// Match two spaces and write the quantization coupling.
    Match(MatchArgs),
    /// Score a coupling file.
    Eval(EvalArgs),
    /// Run a benchmark suite and emit CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// CSV point cloud with Euclidean distance.
    Points,
    /// Whitespace edge list with geodesic distance.
    Graph,
    /// CSV distance matrix.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Voronoi,
    Fluid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Inner {
    Exact,
    Entropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Product,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Distortion,
    DistortionPct,
    Segment,
    Colors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Relerr,
    Scaling,
}

/// How space files are read.
#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    #[arg(long, value_enum, default_value_t = Kind::Points)]
    pub kind: Kind,

    /// Node count for graph files (default: largest id + 1).
    #[arg(long)]
    pub nodes: Option<usize>,

    /// Replace unreachable graph distances by this multiple of the largest
    /// finite distance instead of failing.
    #[arg(long)]
    pub inf_replace: Option<f64>,

    /// Accept points of zero weight.
    #[arg(long)]
    pub allow_zero_mass: bool,
}

/// Inline partitioning flags.
#[derive(Debug, Clone, Args)]
pub struct BlockArgs {
    #[arg(long, value_enum, default_value_t = Method::Voronoi)]
    pub method: Method,

    /// Number of blocks.
    #[arg(long, conflicts_with = "sample_frac")]
    pub m: Option<usize>,

    /// Fraction p of points sampled as representatives, m = floor(p N).
    #[arg(long)]
    pub sample_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub input: PathBuf,

    #[command(flatten)]
    pub space: SpaceArgs,

    #[command(flatten)]
    pub blocks: BlockArgs,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub source: PathBuf,

    #[arg(long)]
    pub target: PathBuf,

    #[command(flatten)]
    pub space: SpaceArgs,

    #[arg(long, requires = "target_partition")]
    pub source_partition: Option<PathBuf>,

    #[arg(long, requires = "source_partition")]
    pub target_partition: Option<PathBuf>,

    #[command(flatten)]
    pub blocks: BlockArgs,

    /// Global metric/feature blend.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,

    /// Local metric/feature blend.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,

    /// Use the feature columns of the point files (fused matching).
    #[arg(long)]
    pub features: bool,

    /// Feature table for the source (overrides point-file features).
    #[arg(long, requires = "features")]
    pub source_features: Option<PathBuf>,

    /// Feature table for the target (overrides point-file features).
    #[arg(long, requires = "features")]
    pub target_features: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Inner::Exact)]
    pub inner: Inner,

    /// Entropic weight (default: scaled to the cost).
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long, value_enum, default_value_t = Init::Product)]
    pub init: Init,

    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,

    #[arg(long, default_value_t = 1e-9)]
    pub conv_tol: f64,

    /// Skip eccentricities, block diameters and bounds.
    #[arg(long)]
    pub no_diagnostics: bool,

    /// Fail with exit code 3 when the global solve does not converge.
    #[arg(long)]
    pub strict: bool,

    /// Also write the full coupling as `i j mass` triplets.
    #[arg(long)]
    pub dense_export: Option<PathBuf>,

    /// Coupling file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub coupling: PathBuf,

    #[arg(long)]
    pub source: PathBuf,

    #[arg(long)]
    pub target: PathBuf,

    #[command(flatten)]
    pub space: SpaceArgs,

    /// Default: `<coupling>.source.part`.
    #[arg(long)]
    pub source_partition: Option<PathBuf>,

    /// Default: `<coupling>.target.part`.
    #[arg(long)]
    pub target_partition: Option<PathBuf>,

    /// Ground-truth target index of every source point.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,

    #[arg(long)]
    pub labels_source: Option<PathBuf>,

    #[arg(long)]
    pub labels_target: Option<PathBuf>,

    /// Source colors (N x 3 CSV in [0, 1]); default: source features.
    #[arg(long)]
    pub colors: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub metric: Metric,

    /// Random matchings averaged by distortion-pct.
    #[arg(long, default_value_t = 5)]
    pub n_random: usize,

    /// Output table for the colors metric.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,

    /// Comma-separated sizes; may be empty.
    #[arg(long, default_value = "")]
    pub sizes: String,

    /// Comma-separated sampling fractions (relerr suite).
    #[arg(long, default_value = "0.5")]
    pub fracs: String,

    /// Trials per size (relerr) or timing repetitions (scaling).
    #[arg(long, default_value_t = 5)]
    pub trials: usize,

    /// CSV output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
