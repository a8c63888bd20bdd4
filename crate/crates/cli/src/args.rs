use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use streid::{FusionConfig, FusionMode, StConfig};

#[derive(Debug, Parser)]
#[command(name = "streid", version, about = "Spatial-temporal re-ranking for cross-camera person retrieval")]
pub struct Cli {
    /// Worker threads for scoring and evaluation. Defaults to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-camera-pair transit distributions from a labelled training set.
    FitSt(FitStArgs),
    /// Score query against gallery under one fusion mode and report CMC/mAP.
    Evaluate(EvaluateArgs),
    /// Run all four fusion modes on the same inputs and tabulate them.
    Ablate(AblateArgs),
    /// Generate a synthetic camera-network dataset.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StArgs {
    /// Histogram bin width in frames.
    #[arg(long, default_value_t = 100)]
    pub bin_width: u64,
    /// Parzen kernel standard deviation, in bins.
    #[arg(long, default_value_t = 50.0)]
    pub sigma: f64,
    /// Kernel window half-width, in multiples of sigma.
    #[arg(long, default_value_t = 3.0)]
    pub truncation: f64,
    /// Histogram length. Derived from the longest training transit if unset.
    #[arg(long)]
    pub max_bins: Option<usize>,
}

impl StArgs {
    pub fn config(&self) -> StConfig {
        StConfig {
            bin_width_frames: self.bin_width,
            kernel_sigma: self.sigma,
            truncation_sigmas: self.truncation,
            max_bins: self.max_bins,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FusionArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 5.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 5.0)]
    pub gamma1: f64,
}

impl FusionArgs {
    pub fn config(&self, mode: FusionMode) -> FusionConfig {
        FusionConfig {
            lambda0: self.lambda0,
            gamma0: self.gamma0,
            lambda1: self.lambda1,
            gamma1: self.gamma1,
            mode,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitStArgs {
    /// Training metadata CSV.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dataset directory; `train.csv` inside it is used when --train is absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Camera count. Inferred from the metadata if unset.
    #[arg(long)]
    pub cameras: Option<usize>,
    #[command(flatten)]
    pub st: StArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalInputs {
    /// Directory holding query/gallery `.csv` and `.feat` files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long)]
    pub gallery_features: Option<PathBuf>,
    /// Transit model written by fit-st. Required by every mode but visual-only.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Camera count. Inferred from metadata and model if unset.
    #[arg(long)]
    pub cameras: Option<usize>,
    /// Longest rank reported on the CMC curve.
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "joint-ls")]
    pub mode: FusionMode,
    /// Also write the full ranked gallery list of every query.
    #[arg(long)]
    pub ranked: bool,
    #[command(flatten)]
    pub inputs: EvalInputs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub inputs: EvalInputs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML simulator config. Built-in defaults if unset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_identities: Option<usize>,
    #[arg(long)]
    pub test_identities: Option<usize>,
    #[arg(long)]
    pub distractor_identities: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub identity_signal: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}
