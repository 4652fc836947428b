//! `primo`: generate demos, learn skills, inspect models and run scenes.
//!
//! Exit codes: 0 success, 1 I/O failure or a rollout that missed its task,
//! 2 usage or invalid input, 3 numerical failure, 4 insufficient data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use primo_core::Error;

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "primo", version, about = "Motion primitives for dual-arm manipulation")]
pub struct Cli {
    /// TOML file with default seed, preprocessing, fit and learning options.
    #[arg(long, global = true, env = "PRIMO_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic demonstration and write it as a raw CSV.
    GenDemo(GenDemoArgs),
    /// Resample, filter and differentiate a raw demonstration.
    Preprocess(PreprocessArgs),
    /// Learn a skill from demonstrations.
    #[command(subcommand)]
    Learn(LearnCommand),
    /// Summarise a model, scene, parameter or CSV file.
    Inspect(InspectArgs),
    /// Write a reference scene with its library inlined.
    Scene(SceneArgs),
    /// Run one scene and export its traces and metrics.
    Simulate(SimulateArgs),
    /// Run many scenes in parallel and summarise them.
    Batch(BatchArgs),
}

#[derive(Args, Debug)]
pub struct GenDemoArgs {
    #[arg(long, value_enum, default_value = "min-jerk")]
    pub profile: ProfileArg,
    /// Start position, comma separated; the origin when absent.
    #[arg(long = "from", value_parser = parse_vec, allow_hyphen_values = true)]
    pub from: Option<Point>,
    /// Goal position, comma separated.
    #[arg(long = "to", value_parser = parse_vec, allow_hyphen_values = true, required = true)]
    pub to: Point,
    /// Demo duration (s).
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Nominal sample period (s).
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Standard deviation of additive position noise (m).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Timestamp jitter as a fraction of the sample period.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Random seed; the config seed or 0 when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model to roll out for the dmp-rollout profile.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Obstacle position; injects an avoidance coupling with --gamma/--beta.
    #[arg(long, value_parser = parse_vec, allow_hyphen_values = true, requires_all = ["gamma", "beta"])]
    pub obstacle: Option<Point>,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    /// Turning-rate gain of the injected coupling.
    #[arg(long, requires = "obstacle")]
    pub gamma: Option<f64>,
    /// Angular decay of the injected coupling.
    #[arg(long, requires = "obstacle")]
    pub beta: Option<f64>,
    /// Output raw demo CSV (`t,x0,...`).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the noise-free trajectory CSV.
    #[arg(long)]
    pub clean: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    MinJerk,
    DmpRollout,
}

/// Overrides for the `[preprocess]` config section.
#[derive(Args, Debug, Default)]
pub struct FilterArgs {
    /// Output sample period (s); the mean input period when absent.
    #[arg(long)]
    pub resample_dt: Option<f64>,
    /// Hampel window length (odd).
    #[arg(long)]
    pub hampel_window: Option<usize>,
    /// Hampel threshold in scaled MADs.
    #[arg(long)]
    pub hampel_nsigma: Option<f64>,
    /// Moving-average window (odd, 1 disables smoothing).
    #[arg(long)]
    pub smooth_window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw demo CSV.
    #[arg(long = "in", short)]
    pub input: PathBuf,
    /// Output trajectory CSV (`t,dof0_x,dof0_v,dof0_a,...`).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the 2D principal-component projection as JSON.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Subcommand, Debug)]
pub enum LearnCommand {
    /// Fit a movement primitive to one demonstration.
    Dmp(LearnDmpArgs),
    /// Learn the obstacle-avoidance style from a perturbed/baseline pair.
    Oa(LearnOaArgs),
}

#[derive(Args, Debug)]
pub struct LearnDmpArgs {
    /// Demo CSV, raw (preprocessed first) or a trajectory.
    #[arg(long)]
    pub demo: PathBuf,
    /// Output model JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of basis functions.
    #[arg(long)]
    pub n_basis: Option<usize>,
    /// Temporal scale; the demo duration when absent.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Also write the fit report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Args, Debug)]
pub struct LearnOaArgs {
    /// Demo recorded with the obstacle present.
    #[arg(long)]
    pub perturbed: PathBuf,
    /// Demo of the same motion without the obstacle.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Obstacle position, comma separated.
    #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
    pub obstacle: Point,
    /// Output parameter JSON (`{gamma, beta_oa}`).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Drop samples whose turning rate is below this fraction of the peak.
    #[arg(long)]
    pub min_relative_rate: Option<f64>,
    /// Also write the extracted `(theta, theta_dot)` series CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Also write the fit report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Model, scene, parameter, metrics JSON or demo/trajectory CSV.
    pub path: PathBuf,
    /// For models: write a rollout CSV here.
    #[arg(long)]
    pub rollout: Option<PathBuf>,
    /// Rollout goal; the model goal when absent.
    #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
    pub goal: Option<Point>,
    /// Rollout start; the model start when absent.
    #[arg(long = "from", value_parser = parse_vec, allow_hyphen_values = true)]
    pub from: Option<Point>,
    /// Rollout temporal scale; the model's when absent.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Rollout step (s).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Rollout length in units of tau.
    #[arg(long, default_value_t = 3.0)]
    pub horizon: f64,
}

#[derive(Args, Debug)]
pub struct SceneArgs {
    #[arg(value_enum)]
    pub kind: SceneKind,
    /// Output scene JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Transfer: switch avoidance off.
    #[arg(long)]
    pub no_avoidance: bool,
    /// Raise: place an obstacle beside the path at mid height.
    #[arg(long)]
    pub obstacle: bool,
    /// Raise: weight the grasp skill to zero.
    #[arg(long)]
    pub no_grasp_skill: bool,
    /// Raise: squeeze the contacts toward the box mid-raise.
    #[arg(long)]
    pub squeeze: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SceneKind {
    /// Planar 0.5 m transfer with an obstacle on the straight path.
    Transfer,
    /// Vertical 0.3 m raise of a box held by both contacts.
    Raise,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene JSON with a library section.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory for CSV traces and metrics.json.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Run as pick-and-raise (3D, grasp tolerance enforced).
    #[arg(long)]
    pub raise: bool,
    /// Switch obstacle avoidance off.
    #[arg(long)]
    pub no_avoidance: bool,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Scene files to run.
    pub scenes: Vec<PathBuf>,
    /// Add N transfer scenes with random obstacle placements.
    #[arg(long)]
    pub random: Option<usize>,
    /// Seed for --random; the config seed or 0 when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory: one subdirectory per scene plus summary files.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Comma-separated coordinates given as one argument.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub Vec<f64>);

fn parse_vec(s: &str) -> Result<Point, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() || v.len() > 3 || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected 1 to 3 finite comma-separated numbers, got {s:?}"));
    }
    Ok(Point(v))
}

/// Errors carried to `main` with their exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    /// The run finished but missed its task.
    Task(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Task(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Core(e) => exit_code(e),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidScene(_) => 2,
        Error::DegenerateBasis { .. } | Error::Divergence { .. } | Error::UndefinedSteering => 3,
        Error::InsufficientData(_) | Error::NonPhysicalFit(_) | Error::DegenerateData(_) => 4,
        Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Config::load(cli.config.as_deref())
        .map_err(Failure::Usage)
        .and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Task(m) => eprintln!("{m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
