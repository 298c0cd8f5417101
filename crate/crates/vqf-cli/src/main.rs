//! Command-line front end for the estimator library: runs the filter over
//! IMU CSV recordings, generates synthetic recordings with ground truth,
//! and evaluates estimates against a reference.

mod eval;
mod io;
mod run;
mod synth;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vqf::VqfParams;

/// Marker for errors caused by bad input or usage; `main` maps these to
/// exit code 2, everything else to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(name = "vqf", version, about = "IMU orientation estimation on CSV recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator over one or more IMU CSV files
    Run(RunArgs),
    /// Generate a synthetic IMU recording and its ground truth
    Synth(SynthArgs),
    /// Compare an estimate CSV against a ground-truth CSV
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// 6D/9D fusion without bias, rest, or disturbance handling
    Basic,
    /// Complete filter with bias estimation and disturbance rejection
    Full,
    /// Acausal forward-backward smoothing over the whole recording
    Offline,
}

#[derive(Args)]
pub struct RunArgs {
    /// Input CSV file(s): columns `t` (optional, seconds), `gyr_x,gyr_y,
    /// gyr_z` (rad/s), `acc_x,acc_y,acc_z` (m/s^2), and optionally
    /// `mag_x,mag_y,mag_z` (any consistent unit)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Estimator variant
    #[arg(long, value_enum, default_value = "full")]
    pub mode: Mode,

    /// Sampling rate in Hz; when omitted it is derived from the `t` column
    #[arg(long)]
    pub rate: Option<f64>,

    /// Parameter file with `name = value` lines (same names as the
    /// parameter flags, in snake_case)
    #[arg(long)]
    pub params: Option<PathBuf>,

    /// Output CSV path (allowed with a single input only)
    #[arg(long, conflicts_with = "output_dir")]
    pub output: Option<PathBuf>,

    /// Directory for the outputs, named `<input stem>_est.csv`
    /// (default: next to each input)
    #[arg(long)]
    pub output_dir: Option<PathBuf>,

    /// Ignore magnetometer columns even when present
    #[arg(long)]
    pub ignore_mag: bool,

    #[command(flatten)]
    pub overrides: ParamOverrides,
}

/// Per-field overrides of the estimator parameters. Time constants and
/// durations are in seconds; bias sigmas, the bias clip, and the rate
/// thresholds in deg/s; the accelerometer threshold in m/s^2; the dip
/// threshold in degrees; the norm threshold relative.
#[derive(Args, Clone, Default)]
#[command(next_help_heading = "Estimator parameters")]
pub struct ParamOverrides {
    /// Time constant (s) of the accelerometer inclination correction
    #[arg(long)]
    pub tau_acc: Option<f64>,
    /// Time constant (s) of the magnetometer heading correction
    #[arg(long)]
    pub tau_mag: Option<f64>,
    /// Estimate the gyroscope bias during motion
    #[arg(long)]
    pub motion_bias_est: Option<bool>,
    /// Estimate the gyroscope bias during rest
    #[arg(long)]
    pub rest_bias_est: Option<bool>,
    /// Detect and reject magnetic disturbances
    #[arg(long)]
    pub mag_dist_rejection: Option<bool>,
    /// Initial bias uncertainty (deg/s)
    #[arg(long)]
    pub bias_sigma_init: Option<f64>,
    /// Time (s) for the bias uncertainty to grow from 0 to 0.1 deg/s
    #[arg(long)]
    pub bias_forgetting_time: Option<f64>,
    /// Maximum bias magnitude per component (deg/s)
    #[arg(long)]
    pub bias_clip: Option<f64>,
    /// Steady-state uncertainty reached by motion updates (deg/s)
    #[arg(long)]
    pub bias_sigma_motion: Option<f64>,
    /// Weight of the vertical bias component during motion updates
    #[arg(long)]
    pub bias_vertical_forgetting_factor: Option<f64>,
    /// Steady-state uncertainty reached by rest updates (deg/s)
    #[arg(long)]
    pub bias_sigma_rest: Option<f64>,
    /// Time (s) below the thresholds before rest is assumed
    #[arg(long)]
    pub rest_min_time: Option<f64>,
    /// Time constant (s) of the rest detection filters
    #[arg(long)]
    pub rest_filter_tau: Option<f64>,
    /// Gyroscope deviation threshold (deg/s) of the rest detection
    #[arg(long)]
    pub rest_th_gyr: Option<f64>,
    /// Accelerometer deviation threshold (m/s^2) of the rest detection
    #[arg(long)]
    pub rest_th_acc: Option<f64>,
    /// Time constant (s) for filtering the current magnetic field
    #[arg(long)]
    pub mag_current_tau: Option<f64>,
    /// Time constant (s) for tracking the reference magnetic field
    #[arg(long)]
    pub mag_ref_tau: Option<f64>,
    /// Relative norm deviation threshold of the disturbance detection
    #[arg(long)]
    pub mag_norm_th: Option<f64>,
    /// Dip angle deviation threshold (deg) of the disturbance detection
    #[arg(long)]
    pub mag_dip_th: Option<f64>,
    /// Time (s) a changed field must persist to become the new reference
    #[arg(long)]
    pub mag_new_time: Option<f64>,
    /// Minimum rotation rate (deg/s) for accepting a changed field
    #[arg(long)]
    pub mag_new_min_gyr: Option<f64>,
    /// Undisturbed time (s) before the disturbance flag clears
    #[arg(long)]
    pub mag_min_undisturbed_time: Option<f64>,
    /// Maximum time (s) the heading correction is fully suspended
    #[arg(long)]
    pub mag_max_rejection_time: Option<f64>,
    /// Gain divisor after the rejection time is exhausted
    #[arg(long)]
    pub mag_rejection_factor: Option<f64>,
}

macro_rules! apply_overrides {
    ($params:expr, $overrides:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $overrides.$field {
            $params.$field = v;
        })*
    };
}

impl ParamOverrides {
    pub fn apply(&self, params: &mut VqfParams) {
        apply_overrides!(
            params,
            self,
            [
                tau_acc,
                tau_mag,
                motion_bias_est,
                rest_bias_est,
                mag_dist_rejection,
                bias_sigma_init,
                bias_forgetting_time,
                bias_clip,
                bias_sigma_motion,
                bias_vertical_forgetting_factor,
                bias_sigma_rest,
                rest_min_time,
                rest_filter_tau,
                rest_th_gyr,
                rest_th_acc,
                mag_current_tau,
                mag_ref_tau,
                mag_norm_th,
                mag_dip_th,
                mag_new_time,
                mag_new_min_gyr,
                mag_min_undisturbed_time,
                mag_max_rejection_time,
                mag_rejection_factor,
            ]
        );
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Trajectory specification (JSON)
    #[arg(long)]
    pub spec: PathBuf,

    /// Sampling rate in Hz
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,

    /// Output path for the IMU sample CSV
    #[arg(long)]
    pub imu: PathBuf,

    /// Output path for the ground-truth CSV
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Estimate CSV: `q9_w..q9_z` columns (run output) or `q_w..q_z`
    #[arg(long)]
    pub estimate: PathBuf,

    /// Ground-truth CSV: `q_w..q_z`, optional `rest` and `bias_x..bias_z`
    #[arg(long)]
    pub truth: PathBuf,

    /// Also write the report to this file
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::Synth(args) => synth::cmd_synth(args),
        Command::Eval(args) => eval::cmd_eval(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        let code = if e.chain().any(|c| c.downcast_ref::<UsageError>().is_some()) { 2 } else { 1 };
        std::process::exit(code);
    }
}
