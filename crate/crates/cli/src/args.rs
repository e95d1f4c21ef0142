use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gamspline", version, about = "Additive spline logistic models: simulate, fit, tune, evaluate, curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON file with default settings; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known additive structure.
    Simulate(SimulateArgs),
    /// Fit one model at a fixed penalty.
    Fit(FitArgs),
    /// Select the penalty on a validation split.
    Tune(TuneArgs),
    /// Score a fitted model with bootstrap intervals.
    Evaluate(EvaluateArgs),
    /// Export centered effect curves of a fitted model.
    Curves(CurvesArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Tune(_) => "tune",
            Command::Evaluate(_) => "evaluate",
            Command::Curves(_) => "curves",
        }
    }
}

/// Where the rows come from: explicit split files, or one file plus a
/// grouped split.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Training rows.
    #[arg(long, value_name = "CSV")]
    pub train: Option<PathBuf>,
    /// Validation rows, used for penalty and threshold selection.
    #[arg(long, value_name = "CSV")]
    pub valid: Option<PathBuf>,
    /// Held-out test rows.
    #[arg(long, value_name = "CSV")]
    pub test: Option<PathBuf>,
    /// Single file split by group into train/valid/test.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Column-role manifest (JSON). Defaults to schema.json beside the data.
    #[arg(long, value_name = "JSON")]
    pub schema: Option<PathBuf>,
    /// Train,valid,test fractions for --data.
    #[arg(long, value_name = "F,F,F")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// B-spline order (4 = cubic).
    #[arg(long)]
    pub order: Option<usize>,
    /// Basis functions per predictor; default round(2 n^0.2).
    #[arg(long)]
    pub num_basis: Option<usize>,
    /// Linear baseline: predictors enter untransformed.
    #[arg(long)]
    pub no_splines: bool,
    /// Newton iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Convergence tolerance on the gradient infinity norm.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for every random choice (fallback: GAMSPLINE_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated true functions (zero, linear, quadratic, sine, smooth-step).
    #[arg(long)]
    pub functions: Option<String>,
    /// Comma-separated covariate coefficients; its length sets the covariate count.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Intercept of the true linear predictor.
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    /// Scale of the logit-normal predictor distribution.
    #[arg(long)]
    pub logit_sigma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Smoothness penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated penalty grid.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fitted model file; default <out>/model.json.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,
    /// Bootstrap replicates per interval.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Tag to break results down by; repeatable.
    #[arg(long)]
    pub subgroup: Vec<String>,
    /// Fixed F1 threshold instead of the validation max-F1 choice.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveFormat {
    Csv,
    Svg,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fitted model file; default <out>/model.json.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,
    /// Output format; default both.
    #[arg(long, value_enum)]
    pub format: Option<CurveFormat>,
}
