use std::path::Path;

use gamspline::data_io::{
    dataset_csv, generate_synthetic, grouped_split, load_dataset, LogitNormal, SchemaManifest, SyntheticSpec,
    TrueFunction,
};
use gamspline::interpret::{all_curves, export_curves, file_stem, ExportFormats};
use gamspline::metrics::{evaluate, render_table, select_f1_threshold, subgroup_report};
use gamspline::tune::tune;
use gamspline::{Dataset, FitOptions, FittedModel, MetricReport, ModelSpec, SpecOptions};
use serde::Serialize;

use crate::args::{Cli, Command, CurvesArgs, EvaluateArgs, FitArgs, SimulateArgs, TuneArgs};
use crate::config::*;
use crate::output::OutputDir;
use crate::{CliError, Status};

pub fn run(cli: &Cli) -> Result<Status, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &file),
        Command::Fit(a) => fit(a, &file),
        Command::Tune(a) => tune_cmd(a, &file),
        Command::Evaluate(a) => evaluate_cmd(a, &file),
        Command::Curves(a) => curves(a, &file),
    }
}

#[derive(Default)]
struct Splits {
    train: Option<Dataset>,
    valid: Option<Dataset>,
    test: Option<Dataset>,
}

fn load_splits(cfg: &DataConfig) -> Result<Splits, CliError> {
    let manifest = SchemaManifest::load(&cfg.schema)?;
    let load = |p: &Option<std::path::PathBuf>| p.as_ref().map(|p| load_dataset(p, &manifest)).transpose();
    Ok(match &cfg.source {
        DataSource::Files { train, valid, test } => Splits {
            train: load(train)?,
            valid: load(valid)?,
            test: load(test)?,
        },
        DataSource::Split { data, plan } => {
            let all = load_dataset(data, &manifest)?;
            let (train, valid, test) = grouped_split(&all, plan)?;
            log::info!(
                "split {} rows into {}/{}/{}",
                all.n_rows(),
                train.n_rows(),
                valid.n_rows(),
                test.n_rows()
            );
            Splits {
                train: Some(train),
                valid: Some(valid),
                test: Some(test),
            }
        }
    })
}

fn require(d: Option<Dataset>, role: &str) -> Result<Dataset, CliError> {
    d.ok_or_else(|| CliError::Usage(format!("no {role} data: pass --{role} or --data")))
}

fn spec_options(m: &ModelConfig, lambda: f64) -> SpecOptions {
    SpecOptions {
        order: m.order,
        num_basis: m.num_basis,
        lambda,
        spline_enabled: m.spline_enabled,
    }
}

fn fit_options(m: &ModelConfig) -> FitOptions {
    FitOptions {
        max_iter: m.max_iter,
        tol: m.tol,
        initial: None,
    }
}

fn status_of(model: &FittedModel) -> Status {
    if model.diagnostics.converged {
        Status::Success
    } else {
        eprintln!(
            "warning: fit stopped after {} iterations without converging (gradient sup-norm {:e})",
            model.diagnostics.iterations, model.diagnostics.gradient_norm
        );
        Status::NotConverged
    }
}

/// Summary written next to every fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub lambda: f64,
    pub n_rows: usize,
    pub n_positive: usize,
    pub spline_enabled: bool,
    pub design_columns: usize,
    pub covariate_columns: usize,
    pub predictor_columns: usize,
    pub basis_sizes: Vec<usize>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub intercept: f64,
    pub gamma_norm: f64,
    pub alpha_norm: f64,
}

impl FitReport {
    pub fn new(model: &FittedModel, train: &Dataset) -> Self {
        let spec = &model.spec;
        let norm = |v: &mut dyn Iterator<Item = &f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        FitReport {
            lambda: spec.lambda,
            n_rows: train.n_rows(),
            n_positive: train.labels.iter().filter(|&&y| y == 1).count(),
            spline_enabled: spec.spline_enabled,
            design_columns: spec.n_columns(),
            covariate_columns: spec.n_covariates(),
            predictor_columns: spec.n_columns() - 1 - spec.n_covariates(),
            basis_sizes: if spec.spline_enabled { spec.bases.iter().map(|b| b.num_basis()).collect() } else { Vec::new() },
            objective: model.diagnostics.objective,
            gradient_norm: model.diagnostics.gradient_norm,
            iterations: model.diagnostics.iterations,
            converged: model.diagnostics.converged,
            intercept: model.nu,
            gamma_norm: norm(&mut model.gamma.iter()),
            alpha_norm: norm(&mut model.alpha.iter().flatten()),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "lambda            {}\n\
             rows              {} ({} positive)\n\
             design columns    {} = 1 intercept + {} covariate + {} predictor{}\n\
             objective         {}\n\
             gradient sup-norm {:e}\n\
             iterations        {}\n\
             converged         {}\n\
             intercept         {}\n\
             |gamma|           {:e}\n\
             |alpha|           {:e}\n",
            self.lambda,
            self.n_rows,
            self.n_positive,
            self.design_columns,
            self.covariate_columns,
            self.predictor_columns,
            if self.spline_enabled { " (spline)" } else { " (linear)" },
            self.objective,
            self.gradient_norm,
            self.iterations,
            self.converged,
            self.intercept,
            self.gamma_norm,
            self.alpha_norm,
        )
    }
}

fn write_model(out: &mut OutputDir, model: &FittedModel, train: &Dataset) -> Result<FitReport, CliError> {
    out.write("model.json", model.to_json()?.as_bytes())?;
    let report = FitReport::new(model, train);
    out.write_json("fit_report.json", &report)?;
    out.write("fit_report.txt", report.render().as_bytes())?;
    Ok(report)
}

fn simulate(a: &SimulateArgs, file: &FileConfig) -> Result<Status, CliError> {
    let (out_dir, seed) = resolve_common(&a.common, file)?;
    let functions: Vec<TrueFunction> = match (&a.functions, &file.functions) {
        (Some(s), _) => parse_list(s, "--functions")?,
        (None, Some(v)) => v.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        (None, None) => vec![TrueFunction::Sine, TrueFunction::Quadratic, TrueFunction::SmoothStep, TrueFunction::Zero],
    };
    let gamma = match &a.gamma {
        Some(s) => parse_list(s, "--gamma")?,
        None => file.gamma.clone().unwrap_or_else(|| vec![0.5, -0.5, 0.25]),
    };
    let cfg = SimulateConfig {
        n: a.n.or(file.n).unwrap_or(1000),
        functions,
        gamma,
        nu: a.nu.or(file.nu).unwrap_or(0.0),
        logit_sigma: a.logit_sigma.or(file.logit_sigma).unwrap_or(LogitNormal::default().sigma),
    };
    if cfg.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let mut spec = SyntheticSpec::new(cfg.n, cfg.functions.clone(), cfg.gamma.clone(), cfg.nu, seed);
    for d in &mut spec.predictor_distribution {
        d.sigma = cfg.logit_sigma;
    }
    let (data, truth) = generate_synthetic(&spec)?;
    let manifest = SchemaManifest::for_dataset(&data);

    let mut out = OutputDir::create(&out_dir)?;
    out.write("data.csv", &dataset_csv(&data, &manifest)?)?;
    out.write_json("schema.json", &manifest)?;
    out.write("ground_truth.json", truth.to_json()?.as_bytes())?;
    println!(
        "simulated {} rows ({} positive) with {} covariates and {} predictors into {}",
        data.n_rows(),
        data.labels.iter().filter(|&&y| y == 1).count(),
        data.n_covariates(),
        data.n_predictors(),
        out_dir.display()
    );
    let settings = RunConfig {
        out: out_dir,
        seed,
        command: CommandConfig::Simulate(cfg),
    };
    out.finish("simulate", &settings)?;
    Ok(Status::Success)
}

fn fit(a: &FitArgs, file: &FileConfig) -> Result<Status, CliError> {
    let (out_dir, seed) = resolve_common(&a.common, file)?;
    let cfg = FitConfig {
        data: resolve_data(&a.data, file, seed)?,
        model: resolve_model(&a.model, file)?,
        lambda: resolve_lambda(a.lambda, file)?,
    };
    let train = require(load_splits(&cfg.data)?.train, "train")?;
    let spec = ModelSpec::from_training(&train, spec_options(&cfg.model, cfg.lambda))?;
    let model = gamspline::fit::fit_model(&spec, &train, &fit_options(&cfg.model))?;

    let mut out = OutputDir::create(&out_dir)?;
    let report = write_model(&mut out, &model, &train)?;
    print!("{}", report.render());
    let status = status_of(&model);
    let settings = RunConfig {
        out: out_dir,
        seed,
        command: CommandConfig::Fit(cfg),
    };
    out.finish("fit", &settings)?;
    Ok(status)
}

fn tune_cmd(a: &TuneArgs, file: &FileConfig) -> Result<Status, CliError> {
    let (out_dir, seed) = resolve_common(&a.common, file)?;
    let cfg = TuneConfig {
        data: resolve_data(&a.data, file, seed)?,
        model: resolve_model(&a.model, file)?,
        grid: resolve_grid(&a.grid, file)?,
    };
    let splits = load_splits(&cfg.data)?;
    let train = require(splits.train, "train")?;
    let valid = require(splits.valid, "valid")?;
    let result = tune(&train, &valid, spec_options(&cfg.model, 0.0), &cfg.grid, &fit_options(&cfg.model))?;

    let mut out = OutputDir::create(&out_dir)?;
    out.write("tune.json", result.to_json()?.as_bytes())?;
    write_model(&mut out, &result.best_model, &train)?;
    println!("{:>10}  {:>10}  note", "lambda", "val AUROC");
    for rec in &result.selection_log {
        let auc = rec.auroc.map_or_else(|| "excluded".to_string(), |v| format!("{v:.6}"));
        let note = if rec.lambda == result.best_lambda && rec.auroc == Some(result.best_auroc) {
            "selected".to_string()
        } else {
            rec.error.clone().unwrap_or_default()
        };
        println!("{:>10}  {:>10}  {note}", rec.lambda, auc);
    }
    let status = status_of(&result.best_model);
    let settings = RunConfig {
        out: out_dir,
        seed,
        command: CommandConfig::Tune(cfg),
    };
    out.finish("tune", &settings)?;
    Ok(status)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub threshold_policy: ThresholdPolicy,
    pub threshold: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub overall: MetricReport,
    pub subgroups: Vec<MetricReport>,
}

fn evaluate_cmd(a: &EvaluateArgs, file: &FileConfig) -> Result<Status, CliError> {
    let (out_dir, seed) = resolve_common(&a.common, file)?;
    let cfg = EvaluateConfig {
        data: resolve_data(&a.data, file, seed)?,
        model_path: resolve_model_path(&a.model, file, &out_dir)?,
        bootstrap: resolve_bootstrap(a.bootstrap, file)?,
        subgroups: if a.subgroup.is_empty() { file.subgroups.clone().unwrap_or_default() } else { a.subgroup.clone() },
        threshold: resolve_threshold(a.threshold, file)?,
    };
    let model = FittedModel::load(&cfg.model_path)?;
    let splits = load_splits(&cfg.data)?;
    let test = require(splits.test, "test")?;

    let threshold = match cfg.threshold {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::ValidationMaxF1 => {
            let valid = splits.valid.ok_or_else(|| {
                CliError::Usage("choosing the F1 threshold needs validation data (--valid or --data), or pass --threshold".into())
            })?;
            select_f1_threshold(&model.predict_proba(&valid)?, &valid.labels)?
        }
    };
    let scores = model.predict_proba(&test)?;
    let overall = evaluate(&scores, &test.labels, threshold, cfg.bootstrap, seed)?;
    let mut subgroups = Vec::new();
    for tag in &cfg.subgroups {
        subgroups.extend(subgroup_report(&scores, &test.labels, &test.tags, tag, threshold, cfg.bootstrap, seed)?);
    }
    let mut rows = vec![overall.clone()];
    rows.extend(subgroups.iter().cloned());
    let table = render_table(&rows);

    let mut out = OutputDir::create(&out_dir)?;
    out.write_json(
        "metrics.json",
        &MetricsFile {
            threshold_policy: cfg.threshold,
            threshold,
            n_bootstrap: cfg.bootstrap,
            seed,
            overall,
            subgroups,
        },
    )?;
    out.write("metrics.txt", table.as_bytes())?;
    print!("{table}");
    println!("F1 threshold {threshold} ({})", match cfg.threshold {
        ThresholdPolicy::Fixed(_) => "fixed",
        ThresholdPolicy::ValidationMaxF1 => "validation max-F1",
    });
    let settings = RunConfig {
        out: out_dir,
        seed,
        command: CommandConfig::Evaluate(cfg),
    };
    out.finish("evaluate", &settings)?;
    Ok(Status::Success)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CurveIndexEntry {
    index: usize,
    predictor: String,
    centering_constant: f64,
    support: gamspline::design::PredictorSupport,
    files: Vec<String>,
}

fn curves(a: &CurvesArgs, file: &FileConfig) -> Result<Status, CliError> {
    let (out_dir, seed) = resolve_common(&a.common, file)?;
    let (csv, svg) = resolve_format(a.format, file)?;
    let cfg = CurvesConfig {
        model_path: resolve_model_path(&a.model, file, &out_dir)?,
        csv,
        svg,
    };
    let model = FittedModel::load(&cfg.model_path)?;
    let tables = all_curves(&model)?;

    let mut out = OutputDir::create(&out_dir)?;
    let dir = out.path("curves");
    for p in export_curves(&model, &dir, ExportFormats { csv, svg })? {
        out.record(&p);
    }
    let index: Vec<CurveIndexEntry> = tables
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let stem = file_stem(j, &t.predictor_name);
            let files = [(csv, "csv"), (svg, "svg")]
                .iter()
                .filter(|(on, _)| *on)
                .map(|(_, ext)| format!("{stem}.{ext}"))
                .collect();
            CurveIndexEntry {
                index: j,
                predictor: t.predictor_name.clone(),
                centering_constant: t.centering_constant,
                support: t.empirical_support,
                files,
            }
        })
        .collect();
    out.write_json("curves/index.json", &index)?;
    println!("wrote {} curves to {}", tables.len(), Path::new(&dir).display());
    let settings = RunConfig {
        out: out_dir,
        seed,
        command: CommandConfig::Curves(cfg),
    };
    out.finish("curves", &settings)?;
    Ok(Status::Success)
}
