use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use mgpi::model::Variant;
use mgpi::scene::Scenario;

/// Conversational group simulator, gated policy trainer and group detector.
#[derive(Debug, Parser)]
#[command(name = "mgpi", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate demonstrations, one JSON Lines file per layout.
    Simulate(SimulateArgs),
    /// Fit a policy network to demonstrations by behavior cloning.
    Train(TrainArgs),
    /// Evaluate a checkpoint, or run two-fold cross-validation.
    Eval(EvalArgs),
    /// Cluster the agents of a layout into conversational groups.
    Detect(DetectArgs),
    /// Score a predicted partition against ground truth.
    EvalGroups(EvalGroupsArgs),
    /// Pooled detection scores of the gate and the pose-only baseline over many layouts.
    BenchGroups(BenchGroupsArgs),
    /// Draw one demonstration frame as SVG.
    Render(RenderArgs),
    /// Tabulate the gate over a lattice of neighbor positions.
    Attention(AttentionArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the speaker-role and transition checkers over demonstrations.
    Check(CheckArgs),
}

/// Output location shared by commands; falls back to `$MGPI_OUT_DIR`, then `out`.
#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["generate", "layouts"])))]
pub struct SimulateArgs {
    /// Number of layouts to generate.
    #[arg(long)]
    pub generate: Option<usize>,
    /// Directory of layout CSV files to simulate instead of generating.
    #[arg(long)]
    pub layouts: Option<PathBuf>,
    #[arg(long, default_value = "static")]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 600)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
    /// `key = value` simulator configuration; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; output does not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub layout: LayoutFlags,
    #[command(flatten)]
    pub rules: RuleFlags,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Layout generation")]
pub struct LayoutFlags {
    /// [default: 2]
    #[arg(long)]
    pub n_groups_min: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    pub n_groups_max: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    pub group_size_min: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    pub group_size_max: Option<usize>,
    /// [default: 50]
    #[arg(long)]
    pub group_radius: Option<f64>,
    /// [default: 250]
    #[arg(long)]
    pub center_spacing: Option<f64>,
    /// [default: 5]
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Interaction rules")]
pub struct RuleFlags {
    /// [default: 0.03]
    #[arg(long)]
    pub p_distract: Option<f64>,
    /// [default: 5]
    #[arg(long)]
    pub distract_trigger_steps: Option<u32>,
    /// [default: 0.5]
    #[arg(long)]
    pub p_strong_address: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    pub p_return_addressed: Option<f64>,
    /// [default: 0.02]
    #[arg(long)]
    pub p_return_spontaneous: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    pub speak_duration_min: Option<u32>,
    /// [default: 60]
    #[arg(long)]
    pub speak_duration_max: Option<u32>,
    /// [default: 0.02]
    #[arg(long)]
    pub p_weak_address: Option<f64>,
    /// [default: 3]
    #[arg(long)]
    pub weak_address_duration_min: Option<u32>,
    /// [default: 8]
    #[arg(long)]
    pub weak_address_duration_max: Option<u32>,
    /// [default: 5]
    #[arg(long)]
    pub respond_duration: Option<u32>,
    /// [default: 0.01]
    #[arg(long)]
    pub p_move: Option<f64>,
    /// [default: 0.05 * center spacing]
    #[arg(long)]
    pub move_speed: Option<f64>,
    /// [default: 0.1 * group radius]
    #[arg(long)]
    pub arrive_epsilon: Option<f64>,
    /// [default: group radius]
    #[arg(long)]
    pub join_radius: Option<f64>,
}

/// Training hyperparameters. Unset flags fall back to `--config`, then to the
/// documented defaults.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// mgpi, nso, sso, eqpool or socpool [default: mgpi]
    #[arg(long = "variant", alias = "arch")]
    pub variant: Option<Variant>,
    /// History window H [default: 15]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Nearest neighbors J per state [default: 4]
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 4096]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// SOCPOOL grid cells per side [default: 4]
    #[arg(long)]
    pub socpool_grid: Option<usize>,
    /// `key = value` file with any of the keys above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of demonstration `.jsonl` files.
    #[arg(long)]
    pub demos: PathBuf,
    /// Architecture; same as `--variant`.
    #[arg(long = "model")]
    pub model: Option<Variant>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: u64,
    /// Checkpoint path [default: <out dir>/model.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss-trace CSV [default: checkpoint path with `.loss.csv`]
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["model", "crossval"])))]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Train and test both folds of a two-fold split by layout instead.
    #[arg(long)]
    pub crossval: bool,
    #[arg(long)]
    pub demos: PathBuf,
    // Training flags apply under --crossval; `--neighbors` also sets the
    // neighbors per evaluated state.
    #[command(flatten)]
    pub train: TrainFlags,
    /// Seed for the fold split and training under --crossval.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path [default: <out dir>/report.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluation threads; the report does not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DbscanFlags {
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 2)]
    pub min_pts: usize,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("method").required(true).args(["model", "pose_only"])))]
pub struct DetectArgs {
    /// Checkpoint of a gated (mgpi) network.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Cluster on scaled Euclidean distances instead of the gate.
    #[arg(long)]
    pub pose_only: bool,
    /// Layout CSV.
    #[arg(long)]
    pub layout: PathBuf,
    #[command(flatten)]
    pub dbscan: DbscanFlags,
    /// Partition JSON [default: <out dir>/groups.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalGroupsArgs {
    /// Predicted partition JSON.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth: a layout CSV or a partition JSON.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub include_singletons: bool,
}

#[derive(Debug, Args)]
pub struct BenchGroupsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of layout CSV files.
    #[arg(long)]
    pub layouts: PathBuf,
    #[command(flatten)]
    pub dbscan: DbscanFlags,
    /// DBSCAN eps for the pose-only baseline [default: same as --eps]
    #[arg(long)]
    pub pose_eps: Option<f64>,
    #[arg(long)]
    pub include_singletons: bool,
    /// Also write the scores as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Demonstration `.jsonl` file.
    #[arg(long)]
    pub demo: PathBuf,
    /// 1-based frame index.
    #[arg(long, default_value_t = 1)]
    pub frame: usize,
    /// SVG path [default: <out dir>/frame.svg]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Cells per side.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Half-width of the lattice in network position units (scene units / position scale).
    #[arg(long, default_value_t = 3.0)]
    pub extent: f64,
    /// Observer gaze as `x,y`.
    #[arg(long, default_value = "-1,0", allow_hyphen_values = true)]
    pub observer_gaze: String,
    /// Neighbor gaze as `x,y`.
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    pub neighbor_gaze: String,
    /// CSV path [default: <out dir>/attention.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test fixture: tamper with the analytic gradient before comparing.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Directory of demonstration `.jsonl` files.
    #[arg(long)]
    pub demos: PathBuf,
}
