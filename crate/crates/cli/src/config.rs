//! Layered run settings: command-line flags, then the `--config` JSON file,
//! then built-in defaults. The seed additionally falls back to the
//! `GAMSPLINE_SEED` environment variable before its default.

use std::path::{Path, PathBuf};

use gamspline::data_io::{SplitPlan, TrueFunction};
use gamspline::{DEFAULT_BOOTSTRAP, DEFAULT_LAMBDA_GRID, DEFAULT_ORDER};
use serde::{Deserialize, Serialize};

use crate::args::{CommonArgs, CurveFormat, DataArgs, ModelArgs};
use crate::CliError;

pub const SEED_ENV: &str = "GAMSPLINE_SEED";
pub const DEFAULT_OUT: &str = "gamspline-out";
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub split: Option<[f64; 3]>,
    pub order: Option<usize>,
    pub num_basis: Option<usize>,
    pub spline_enabled: Option<bool>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub lambda: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub model: Option<PathBuf>,
    pub bootstrap: Option<usize>,
    pub subgroups: Option<Vec<String>>,
    pub threshold: Option<f64>,
    pub format: Option<String>,
    pub n: Option<usize>,
    pub functions: Option<Vec<String>>,
    pub gamma: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub logit_sigma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| gamspline::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Where the rows of each split come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Files {
        train: Option<PathBuf>,
        valid: Option<PathBuf>,
        test: Option<PathBuf>,
    },
    Split { data: PathBuf, plan: SplitPlan },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub order: usize,
    /// `None` applies the sample-size rule.
    pub num_basis: Option<usize>,
    pub spline_enabled: bool,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    /// Maximize F1 on the validation split, then freeze.
    ValidationMaxF1,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub functions: Vec<TrueFunction>,
    pub gamma: Vec<f64>,
    pub nu: f64,
    pub logit_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateConfig {
    pub data: DataConfig,
    pub model_path: PathBuf,
    pub bootstrap: usize,
    pub subgroups: Vec<String>,
    pub threshold: ThresholdPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvesConfig {
    pub model_path: PathBuf,
    pub csv: bool,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandConfig {
    Simulate(SimulateConfig),
    Fit(FitConfig),
    Tune(TuneConfig),
    Evaluate(EvaluateConfig),
    Curves(CurvesConfig),
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub command: CommandConfig,
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("{what}: cannot parse {s:?}"))))
        .collect()
}

pub fn resolve_common(args: &CommonArgs, file: &FileConfig) -> Result<(PathBuf, u64), CliError> {
    let out = args.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    let seed = match args.seed.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    Ok((out, seed))
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("{what} file {} does not exist", path.display())))
    }
}

pub fn resolve_data(args: &DataArgs, file: &FileConfig, seed: u64) -> Result<DataConfig, CliError> {
    let pick = |flag: &Option<PathBuf>, cfg: &Option<PathBuf>| flag.clone().or_else(|| cfg.clone());
    let data = pick(&args.data, &file.data);
    let train = pick(&args.train, &file.train);
    let valid = pick(&args.valid, &file.valid);
    let test = pick(&args.test, &file.test);

    let source = if let Some(data) = data {
        if train.is_some() || valid.is_some() || test.is_some() {
            return Err(CliError::Usage("--data cannot be combined with --train/--valid/--test".into()));
        }
        let split = match &args.split {
            Some(s) => {
                let v: Vec<f64> = parse_list(s, "--split")?;
                <[f64; 3]>::try_from(v).map_err(|_| CliError::Usage("--split needs three fractions".into()))?
            }
            None => file.split.unwrap_or({
                let d = SplitPlan::default();
                [d.train, d.valid, d.test]
            }),
        };
        let plan = SplitPlan {
            train: split[0],
            valid: split[1],
            test: split[2],
            group_aware: true,
            seed,
        };
        plan.validate()?;
        DataSource::Split {
            data: existing(data, "data")?,
            plan,
        }
    } else {
        DataSource::Files {
            train: train.map(|p| existing(p, "train")).transpose()?,
            valid: valid.map(|p| existing(p, "valid")).transpose()?,
            test: test.map(|p| existing(p, "test")).transpose()?,
        }
    };

    let schema = match pick(&args.schema, &file.schema) {
        Some(s) => s,
        None => {
            let first = match &source {
                DataSource::Split { data, .. } => Some(data),
                DataSource::Files { train, valid, test } => train.as_ref().or(valid.as_ref()).or(test.as_ref()),
            };
            let dir = first
                .ok_or_else(|| CliError::Usage("no input data given (use --train/--valid/--test or --data)".into()))?
                .parent()
                .unwrap_or(Path::new("."));
            let guess = dir.join("schema.json");
            log::info!("no --schema given, using {}", guess.display());
            guess
        }
    };
    Ok(DataConfig {
        source,
        schema: existing(schema, "schema")?,
    })
}

pub fn resolve_model(args: &ModelArgs, file: &FileConfig) -> Result<ModelConfig, CliError> {
    let order = args.order.or(file.order).unwrap_or(DEFAULT_ORDER);
    let max_iter = args.max_iter.or(file.max_iter).unwrap_or(100);
    let tol = args.tol.or(file.tol).unwrap_or(1e-8);
    if order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(CliError::Usage("--max-iter and --tol must be positive".into()));
    }
    Ok(ModelConfig {
        order,
        num_basis: args.num_basis.or(file.num_basis),
        spline_enabled: if args.no_splines { false } else { file.spline_enabled.unwrap_or(true) },
        max_iter,
        tol,
    })
}

pub fn resolve_lambda(flag: Option<f64>, file: &FileConfig) -> Result<f64, CliError> {
    let l = flag.or(file.lambda).unwrap_or(DEFAULT_LAMBDA);
    if !(l >= 0.0 && l.is_finite()) {
        return Err(CliError::Usage(format!("--lambda {l} must be finite and non-negative")));
    }
    Ok(l)
}

pub fn resolve_grid(flag: &Option<String>, file: &FileConfig) -> Result<Vec<f64>, CliError> {
    let grid = match flag {
        Some(s) => parse_list(s, "--grid")?,
        None => file.grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
    };
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(CliError::Usage("--grid needs finite non-negative penalties".into()));
    }
    Ok(grid)
}

pub fn resolve_model_path(flag: &Option<PathBuf>, file: &FileConfig, out: &Path) -> Result<PathBuf, CliError> {
    let path = flag
        .clone()
        .or_else(|| file.model.clone())
        .unwrap_or_else(|| out.join("model.json"));
    existing(path, "model")
}

pub fn resolve_bootstrap(flag: Option<usize>, file: &FileConfig) -> Result<usize, CliError> {
    let b = flag.or(file.bootstrap).unwrap_or(DEFAULT_BOOTSTRAP);
    if b == 0 {
        return Err(CliError::Usage("--bootstrap must be at least 1".into()));
    }
    Ok(b)
}

pub fn resolve_threshold(flag: Option<f64>, file: &FileConfig) -> Result<ThresholdPolicy, CliError> {
    match flag.or(file.threshold) {
        Some(t) if t.is_finite() => Ok(ThresholdPolicy::Fixed(t)),
        Some(t) => Err(CliError::Usage(format!("--threshold {t} is not finite"))),
        None => Ok(ThresholdPolicy::ValidationMaxF1),
    }
}

pub fn resolve_format(flag: Option<CurveFormat>, file: &FileConfig) -> Result<(bool, bool), CliError> {
    let format = match (flag, &file.format) {
        (Some(f), _) => f,
        (None, Some(s)) => match s.as_str() {
            "csv" => CurveFormat::Csv,
            "svg" => CurveFormat::Svg,
            "both" => CurveFormat::Both,
            other => return Err(CliError::Usage(format!("unknown curve format {other:?}"))),
        },
        (None, None) => CurveFormat::Both,
    };
    Ok(match format {
        CurveFormat::Csv => (true, false),
        CurveFormat::Svg => (false, true),
        CurveFormat::Both => (true, true),
    })
}
