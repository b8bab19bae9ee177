use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "calib", version, about = "Data-driven stabilizing control from trajectory data")]
pub struct Cli {
    /// Directory receiving every artifact of the command.
    #[arg(long, global = true, env = "CALIB_OUT_DIR", default_value = "runs")]
    pub out_dir: PathBuf,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trajectory dataset (manifest + one CSV per trajectory).
    GenData(GenDataArgs),
    /// Fit the exact intrinsic representation of LTI data.
    FitLti(FitLtiArgs),
    /// Synthesize a stabilizing controller for a fitted LTI representation.
    Synth(SynthArgs),
    /// Train the CALIB networks on drone data.
    TrainCalib(TrainCalibArgs),
    /// Run a controller in closed loop with a simulated plant.
    Simulate(SimulateArgs),
    /// Evaluate a CALIB checkpoint on a dataset, or re-verify a synthesized certificate.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantArg {
    Drone,
    Integrator,
    DoubleIntegrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "drone")]
    pub plant: PlantArg,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Samples per trajectory.
    #[arg(long, default_value_t = 61)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Drone only: small-signal ranges for the linear design.
    #[arg(long)]
    pub near_origin: bool,
    /// Drone only: override the initial yaw range with `[-y, y]`.
    #[arg(long)]
    pub yaw_range: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitLtiArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Window depth (window length is depth + 1 samples).
    #[arg(long = "L", alias = "depth", default_value_t = 5)]
    pub depth: usize,
    /// State cardinality.
    #[arg(long, default_value_t = 4)]
    pub nb: usize,
    /// Relative singular-value threshold of the rank check.
    #[arg(long, default_value_t = calib_core::behavior_data::DEFAULT_RANK_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeavingArg {
    Projected,
    Exact,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Representation written by `fit-lti`.
    #[arg(long)]
    pub rep: PathBuf,
    /// Per-step decay rate of the Lyapunov value, in (0, 1].
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = calib_core::synthesis::DEFAULT_EPS_PD)]
    pub eps_pd: f64,
    /// Alternating-projection iterations before the barrier fallback.
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value = "projected")]
    pub weaving: WeavingArg,
    /// Shrink the controller gain after a certificate is found.
    #[arg(long)]
    pub polish: bool,
    /// Disable the log-barrier fallback.
    #[arg(long)]
    pub no_barrier: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainCalibArgs {
    /// Training dataset directory.
    #[arg(long)]
    pub train: PathBuf,
    /// Test dataset directory; the best-by-test checkpoint is kept.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long = "L", alias = "depth", default_value_t = 4)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub nb: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_chi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_w: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub lambda_inf: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_e: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_v: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_grad: f64,
    /// Use the narrow networks (64-wide maps, 32-wide Lyapunov head).
    #[arg(long)]
    pub compact: bool,
    /// Hidden width of the state, parameterization and transition networks.
    #[arg(long, conflicts_with = "compact")]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerArg {
    Lti,
    Calib,
    Deepc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub controller: ControllerArg,
    /// CALIB checkpoint (`calib`) or synthesized controller JSON (`lti`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// LTI representation, for the Lyapunov column of `lti` runs.
    #[arg(long)]
    pub rep: Option<PathBuf>,
    /// Dataset whose Hankel matrix drives `deepc`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "drone")]
    pub plant: PlantArg,
    /// Controlled steps after warm-up.
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Initial state, comma separated (drone: x,y,z[,yaw]).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "8,-6,5")]
    pub init: Vec<f64>,
    /// Per-input clamp `lo:hi`, comma separated; omitted means no saturation.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub saturate: Vec<String>,
    /// `deepc` only: window depth of the initial match (t_ini = L + 1).
    #[arg(long = "L", alias = "depth", default_value_t = 5)]
    pub depth: usize,
    /// `deepc` only: planning horizon.
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    /// `calib` only: steps of the open-loop predicted rollout.
    #[arg(long, default_value_t = 100)]
    pub predict: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// CALIB checkpoint to evaluate on `--data`.
    #[arg(long, requires = "data", conflicts_with_all = ["controller", "rep"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthesized controller to re-verify against `--rep`.
    #[arg(long, requires = "rep")]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub rep: Option<PathBuf>,
    /// Decay rate for the certificate or the hinge statistics (default: the stored value).
    #[arg(long)]
    pub beta: Option<f64>,
}
