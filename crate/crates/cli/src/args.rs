use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use idal_core::losses::ConditioningKind;
use idal_core::trainer::TrainOverrides;

#[derive(Debug, Parser)]
#[command(name = "idal", version, about = "Domain adaptation on synthetic shift data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic source/target pair as CSV files.
    GenData(GenDataArgs),
    /// Train on a source/target pair.
    Train(TrainArgs),
    /// Score a checkpoint on datasets.
    Eval(EvalArgs),
    /// Check every loss gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the loss-combination ladder over several seeds.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_source: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_target: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub rotation: f64,
    #[arg(long, default_value_t = 1.3)]
    pub scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_source: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_target: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_conditioning(s: &str) -> Result<ConditioningKind, String> {
    s.parse().map_err(|e: idal_core::Error| e.to_string())
}

/// Hyper-parameter flags shared by `train` and `ablate`.
#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    /// Named hyper-parameter set.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON file of config overrides; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Pseudo-label confidence threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long, value_parser = parse_conditioning)]
    pub conditioning: Option<ConditioningKind>,
}

impl HyperArgs {
    pub fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            preset: self.preset.clone(),
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            lambda: self.lambda,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            eta: self.eta,
            pseudo_label_confidence: self.tau,
            pseudo_label_warmup_epochs: self.warmup_epochs,
            conditioning: self.conditioning,
            ..TrainOverrides::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint directory instead of starting fresh.
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    pub resume: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check a single loss (ce, dis, im, mcc, mmd, plmmd).
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of training seeds, counting up from `--seed` (default 0).
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[command(flatten)]
    pub hyper: HyperArgs,
}
