use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mimic_core::eval::PushDirection;
use mimic_core::reference::ReferenceKind;
use mimic_core::train::{AblationAxis, ReplayMode};

#[derive(Debug, Parser)]
#[command(
    name = "mimic",
    version,
    about = "Train motion-mimicking policies through a differentiable simulator"
)]
pub struct Cli {
    /// Output directory; defaults to `$MIMIC_OUTPUT_ROOT/<command>-<character>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on concurrently simulated environments.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a policy against a reference motion.
    Train(TrainArgs),
    /// Compare analytic rollout gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train every variant along one ablation axis and compare them.
    Ablate(AblateArgs),
    /// Roll out a checkpoint and export the visited states as a motion.
    Rollout(RolloutArgs),
    /// Score a checkpoint: pose error, push robustness, friction sweep.
    Evaluate(EvaluateArgs),
    /// Write a generated reference motion for a builtin character.
    GenRef(GenRefArgs),
}

/// Run settings shared by the training-based commands. Flags override the
/// config file.
#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML run config (`character`, `motion` and a `[train]` table).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin character name or character spec file.
    #[arg(long)]
    pub character: Option<String>,
    /// Reference motion file.
    #[arg(long)]
    pub motion: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Episode length in control steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// `none`, `random:<gamma>` or `threshold:<epsilon>`.
    #[arg(long)]
    pub replay: Option<ReplayMode>,
    /// Cut state gradients every N steps.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Reference state initialization.
    #[arg(long)]
    pub rsi: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Length of the per-iteration evaluation rollout.
    #[arg(long)]
    pub eval_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Print progress every N iterations (0: quiet).
    #[arg(long, default_value_t = 10)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of parameter coordinates probed (at least 32).
    #[arg(long, default_value_t = 32)]
    pub coords: usize,
    /// Test hook: scale the adjoint of one primitive, `<op>[:factor]`.
    #[arg(long, hide = true)]
    pub corrupt_adjoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub axis: AblationAxis,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
}

/// Rollout horizon, in seconds or control steps.
#[derive(Debug, Args, Clone, Copy)]
#[group(multiple = false)]
pub struct Horizon {
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Number of exported frames.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    /// `policy/v1` checkpoint; a zero policy when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the checkpoint's character.
    #[arg(long)]
    pub character: Option<String>,
    #[arg(long)]
    pub motion: PathBuf,
    #[command(flatten)]
    pub horizon: Horizon,
    /// Hidden widths of the zero policy.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub character: Option<String>,
    #[arg(long)]
    pub motion: PathBuf,
    #[command(flatten)]
    pub horizon: Horizon,
    /// Search the largest survivable push in these directions.
    #[arg(long, value_delimiter = ',')]
    pub push: Vec<PushDirection>,
    /// Re-evaluate at these ground friction coefficients.
    #[arg(long, value_delimiter = ',')]
    pub friction: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct GenRefArgs {
    #[arg(long)]
    pub character: String,
    /// `spline-track` or `oracle-pd`.
    #[arg(long, default_value = "spline-track")]
    pub kind: ReferenceKind,
}
