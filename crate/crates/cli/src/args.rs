use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgp_core::{NoisePlacement, PartitionMethod, Target};

use crate::ingest::TargetColumn;

#[derive(Debug, Parser)]
#[command(name = "hgp", version, about = "Hierarchical mixture-of-experts Gaussian process regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a data set from a GP prior.
    Synth(SynthArgs),
    /// Fit hyperparameters and write a model file.
    Train(TrainArgs),
    /// Predict at new inputs.
    Predict(PredictArgs),
    /// RMSE, NLPD and (with a reference model) likelihood ratio on a test set.
    Eval(EvalArgs),
    /// Timing and depth sweeps.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Kdtree,
    Random,
}

impl From<MethodArg> for PartitionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Kdtree => PartitionMethod::KdtreeStriped,
            MethodArg::Random => PartitionMethod::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Latent,
    Noisy,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Latent => Target::Latent,
            TargetArg::Noisy => Target::Noisy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Root,
    PerLeaf,
}

impl From<NoiseArg> for NoisePlacement {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Root => NoisePlacement::Root,
            NoiseArg::PerLeaf => NoisePlacement::PerLeaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleArg {
    Auto,
    Exact,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Scaling,
    Depth,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// Worker threads [default: available parallelism].
    #[arg(long, env = "HGP_WORKERS")]
    pub workers: Option<usize>,
}

/// Hyperparameters of the generating GP.
#[derive(Debug, Clone, Args)]
pub struct GpArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_f: f64,
    /// One value for all dimensions, or one per dimension.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub lengthscale: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Training rows.
    #[arg(long)]
    pub n: usize,
    /// Test rows, drawn from the same function.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    #[command(flatten)]
    pub gp: GpArgs,
    /// Inputs are uniform on [0, extent)^D.
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long, value_enum, default_value_t = SampleArg::Auto)]
    pub sampler: SampleArg,
    /// Random features for the Fourier sampler.
    #[arg(long, default_value_t = 2048)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column, 0-based index or header name [default: last].
    #[arg(long)]
    pub target_col: Option<TargetColumn>,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    #[arg(long, conflicts_with = "leaf_size")]
    pub experts: Option<usize>,
    /// Choose the expert count as ceil(N / leaf size).
    #[arg(long)]
    pub leaf_size: Option<usize>,
    /// Branching factor per level, root first [default: one level].
    #[arg(long, value_delimiter = ',')]
    pub branching: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = MethodArg::Kdtree)]
    pub method: MethodArg,
    /// Number of experts each training point joins.
    #[arg(long, default_value_t = 1)]
    pub sharing: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Train one lengthscale shared by all dimensions.
    #[arg(long)]
    pub tie_lengthscales: bool,
    /// Start from the hyperparameters of an existing model.
    #[arg(long)]
    pub init_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = NoiseArg::Root)]
    pub noise_placement: NoiseArg,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Iteration log [default: <model>.log.csv].
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Options shared by commands that load a model.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Read the training data from here instead of the recorded path.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Accept training data whose hash differs from the recorded one.
    #[arg(long)]
    pub override_hash: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Test inputs.
    #[arg(long)]
    pub data: PathBuf,
    /// A column to drop from the test file (e.g. its targets).
    #[arg(long)]
    pub target_col: Option<TargetColumn>,
    #[arg(long)]
    pub header: bool,
    #[arg(long, value_enum, default_value_t = TargetArg::Noisy)]
    pub target: TargetArg,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Test set with targets.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column of the test set [default: last].
    #[arg(long)]
    pub target_col: Option<TargetColumn>,
    #[arg(long)]
    pub header: bool,
    /// Model treated as ground truth for the likelihood ratio.
    #[arg(long)]
    pub reference_model: Option<PathBuf>,
    /// Training data for the reference model instead of its recorded path.
    #[arg(long)]
    pub reference_train_data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub mode: BenchMode,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Scaling: training set sizes.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
    pub sizes: Vec<usize>,
    /// Scaling: points per leaf.
    #[arg(long, default_value_t = 512)]
    pub leaf_size: usize,
    /// Scaling: timed evaluations per size (median reported).
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// Scaling: SVG plot of time against N.
    #[arg(long)]
    pub plot: Option<PathBuf>,

    #[command(flatten)]
    pub gp: GpArgs,
    /// Depth: training rows.
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    /// Depth: test rows.
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    /// Depth: deepest level; level L has branching-factor^L experts.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 4)]
    pub branching_factor: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Kdtree)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1)]
    pub sharing: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Depth: skip training; every model uses the generating hyperparameters.
    #[arg(long)]
    pub fixed_hyperparameters: bool,
    /// Depth: largest N for which the full GP reference is fitted.
    #[arg(long, default_value_t = 8192)]
    pub reference_limit: usize,
}
