//! CSV ingestion, patient-grouped splitting and synthetic data with a known
//! additive ground truth.

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::Dataset;
use crate::error::{Error, Result};
use crate::sigmoid;

/// Write `bytes` to `path` through a temporary file in the same directory
/// followed by a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Column roles of a CSV dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaManifest {
    pub label: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub predictors: Vec<String>,
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Tag name to the column holding its categories.
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    /// Predictor columns hold logits and are passed through a sigmoid.
    #[serde(default)]
    pub logits_input: bool,
}

impl SchemaManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    /// Manifest describing how [`write_dataset`] lays out `data`.
    pub fn for_dataset(data: &Dataset) -> Self {
        SchemaManifest {
            label: "label".into(),
            covariates: data.covariate_names.clone(),
            predictors: data.predictor_names.clone(),
            group_id: "group_id".into(),
            timestamp: data.timestamps.as_ref().map(|_| "timestamp".into()),
            tags: data.tags.keys().map(|k| (k.clone(), k.clone())).collect(),
            logits_input: false,
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Load(format!("missing column {name}")))
}

fn parse_cell(rec: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(Error::Load(format!("row {row}, column {column} is missing")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Load(format!("row {row}, column {column}: {raw:?} is not numeric")))?;
    if !v.is_finite() {
        return Err(Error::Load(format!("row {row}, column {column}: {raw:?} is not finite")));
    }
    Ok(v)
}

/// Load and validate a CSV dataset. Rows are numbered from 1 (the first
/// line after the header) in error messages.
pub fn load_dataset(path: &Path, manifest: &SchemaManifest) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_dataset_from_reader(file, manifest)
}

pub fn load_dataset_from_reader<R: std::io::Read>(reader: R, manifest: &SchemaManifest) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = column_index(&headers, &manifest.label)?;
    let group_idx = column_index(&headers, &manifest.group_id)?;
    let cov_idx = manifest
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let pred_idx = manifest
        .predictors
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let ts_idx = manifest
        .timestamp
        .as_ref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let tag_idx = manifest
        .tags
        .iter()
        .map(|(name, col)| Ok((name.clone(), column_index(&headers, col)?)))
        .collect::<Result<Vec<_>>>()?;

    let (p, j) = (cov_idx.len(), pred_idx.len());
    let mut labels = Vec::new();
    let mut cov = Vec::new();
    let mut pred = Vec::new();
    let mut groups = Vec::new();
    let mut ts = Vec::new();
    let mut tags: BTreeMap<String, Vec<String>> = tag_idx.iter().map(|(n, _)| (n.clone(), Vec::new())).collect();

    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let y = parse_cell(&rec, label_idx, row, &manifest.label)?;
        if y != 0.0 && y != 1.0 {
            return Err(Error::Load(format!("row {row}, column {}: label {y} is not 0 or 1", manifest.label)));
        }
        labels.push(y as u8);
        for (k, &idx) in cov_idx.iter().enumerate() {
            cov.push(parse_cell(&rec, idx, row, &manifest.covariates[k])?);
        }
        for (k, &idx) in pred_idx.iter().enumerate() {
            let name = &manifest.predictors[k];
            let mut v = parse_cell(&rec, idx, row, name)?;
            if manifest.logits_input {
                v = sigmoid(v);
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Load(format!("row {row}, column {name} out of [0,1] (value {v})")));
            }
            pred.push(v);
        }
        let g = rec.get(group_idx).unwrap_or("").trim();
        if g.is_empty() {
            return Err(Error::Load(format!("row {row}, column {} is missing", manifest.group_id)));
        }
        groups.push(g.to_string());
        if let (Some(idx), Some(name)) = (ts_idx, manifest.timestamp.as_ref()) {
            ts.push(parse_cell(&rec, idx, row, name)?);
        }
        for (name, idx) in &tag_idx {
            let v = rec.get(*idx).unwrap_or("").trim();
            if v.is_empty() {
                return Err(Error::Load(format!("row {row}, tag column for {name} is missing")));
            }
            tags.get_mut(name).expect("tag registered").push(v.to_string());
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Load("file has no data rows".into()));
    }
    let data = Dataset::new(
        manifest.covariates.clone(),
        manifest.predictors.clone(),
        labels,
        DMatrix::from_row_slice(n, p, &cov),
        DMatrix::from_row_slice(n, j, &pred),
        groups,
        ts_idx.map(|_| ts),
        tags,
    )?;
    info!(
        "loaded {n} rows ({} positive), {p} covariates, {j} predictors",
        data.labels.iter().filter(|&&y| y == 1).count()
    );
    for (k, name) in manifest.predictors.iter().enumerate() {
        let col = data.predictors.column(k);
        log::debug!("predictor {name}: mean {:.4}, min {:.4}, max {:.4}", col.mean(), col.min(), col.max());
    }
    Ok(data)
}

/// Serialize `data` as CSV in the layout named by `manifest` (which must
/// describe probabilities, not logits).
pub fn write_dataset(data: &Dataset, manifest: &SchemaManifest, path: &Path) -> Result<()> {
    let bytes = dataset_csv(data, manifest)?;
    write_atomic(path, &bytes)
}

pub fn dataset_csv(data: &Dataset, manifest: &SchemaManifest) -> Result<Vec<u8>> {
    if manifest.logits_input {
        return Err(Error::Unsupported("datasets are written as probabilities, not logits".into()));
    }
    if manifest.covariates != data.covariate_names || manifest.predictors != data.predictor_names {
        return Err(Error::invalid("manifest columns do not match the dataset"));
    }
    if manifest.timestamp.is_some() != data.timestamps.is_some() {
        return Err(Error::invalid("manifest and dataset disagree on the timestamp column"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![manifest.group_id.clone()];
    header.extend(manifest.timestamp.iter().cloned());
    header.push(manifest.label.clone());
    header.extend(manifest.covariates.iter().cloned());
    header.extend(manifest.predictors.iter().cloned());
    let tag_cols: Vec<(&String, &Vec<String>)> = manifest
        .tags
        .iter()
        .map(|(name, col)| {
            data.tags
                .get(name)
                .map(|v| (col, v))
                .ok_or_else(|| Error::invalid(format!("dataset has no tag {name}")))
        })
        .collect::<Result<_>>()?;
    header.extend(tag_cols.iter().map(|(c, _)| (*c).clone()));
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = vec![data.group_ids[i].clone()];
        if let Some(t) = &data.timestamps {
            rec.push(t[i].to_string());
        }
        rec.push(data.labels[i].to_string());
        rec.extend((0..data.n_covariates()).map(|c| data.covariates[(i, c)].to_string()));
        rec.extend((0..data.n_predictors()).map(|c| data.predictors[(i, c)].to_string()));
        rec.extend(tag_cols.iter().map(|(_, v)| v[i].clone()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv flush failed: {e}")))
}

/// Train/validation/test fractions over groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    /// When false every row is its own group.
    pub group_aware: bool,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
            group_aware: true,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.valid, self.test];
        if f.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("split fractions must be positive"));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }
}

/// Row indices (into the source dataset, ascending) of each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Number of groups per split: validation and test get `round(G·f)`, at
/// least one each, and training keeps the rest (also at least one).
fn split_counts(n_groups: usize, plan: &SplitPlan) -> (usize, usize, usize) {
    let g = n_groups as f64;
    let mut v = ((g * plan.valid).round() as usize).max(1);
    let mut t = ((g * plan.test).round() as usize).max(1);
    while v + t > n_groups - 1 {
        if v >= t && v > 1 {
            v -= 1;
        } else {
            t -= 1;
        }
    }
    (n_groups - v - t, v, t)
}

/// Assign whole groups to splits by a seeded shuffle, then keep one row
/// per group in validation and test (latest timestamp, or a seeded random
/// row when there are no timestamps).
pub fn grouped_split_indices(data: &Dataset, plan: &SplitPlan) -> Result<SplitIndices> {
    plan.validate()?;
    let n = data.n_rows();
    let row_group: Vec<usize>;
    let mut group_rows: Vec<Vec<usize>> = Vec::new();
    if plan.group_aware {
        let mut index: HashMap<&str, usize> = HashMap::new();
        row_group = data
            .group_ids
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let next = index.len();
                let gi = *index.entry(g.as_str()).or_insert(next);
                if gi == group_rows.len() {
                    group_rows.push(Vec::new());
                }
                group_rows[gi].push(i);
                gi
            })
            .collect();
    } else {
        row_group = (0..n).collect();
        group_rows = (0..n).map(|i| vec![i]).collect();
    }
    let n_groups = group_rows.len();
    if n_groups < 3 {
        return Err(Error::invalid(format!("{n_groups} groups cannot fill three splits")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(&mut rng);
    let (c_train, c_valid, _) = split_counts(n_groups, plan);
    let mut assignment = vec![0u8; n_groups];
    for (pos, &g) in order.iter().enumerate() {
        assignment[g] = if pos < c_train {
            0
        } else if pos < c_train + c_valid {
            1
        } else {
            2
        };
    }

    let train = (0..n).filter(|&i| assignment[row_group[i]] == 0).collect();
    let mut warned = false;
    let mut dedup = |which: u8, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut keep = Vec::new();
        for (g, rows) in group_rows.iter().enumerate() {
            if assignment[g] != which {
                continue;
            }
            let chosen = if rows.len() == 1 {
                rows[0]
            } else if let Some(ts) = &data.timestamps {
                // first row among those with the latest timestamp
                let mut best = rows[0];
                for &r in &rows[1..] {
                    if ts[r] > ts[best] {
                        best = r;
                    }
                }
                best
            } else {
                if !warned {
                    warn!("no timestamp column; keeping one random row per group in validation/test");
                    warned = true;
                }
                rows[rng.random_range(0..rows.len())]
            };
            keep.push(chosen);
        }
        keep.sort_unstable();
        keep
    };
    let valid = dedup(1, &mut rng);
    let test = dedup(2, &mut rng);
    Ok(SplitIndices { train, valid, test })
}

/// [`grouped_split_indices`] materialized as datasets.
pub fn grouped_split(data: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = grouped_split_indices(data, plan)?;
    Ok((
        data.select_rows(&idx.train),
        data.select_rows(&idx.valid),
        data.select_rows(&idx.test),
    ))
}

/// Centered test functions on `[0, 1]` (each integrates to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueFunction {
    Zero,
    Linear,
    Quadratic,
    Sine,
    SmoothStep,
}

const SMOOTH_STEP_SLOPE: f64 = 10.0;

impl TrueFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TrueFunction::Zero => 0.0,
            TrueFunction::Linear => 2.0 * x - 1.0,
            TrueFunction::Quadratic => 12.0 * (x - 0.5) * (x - 0.5) - 1.0,
            TrueFunction::Sine => (2.0 * std::f64::consts::PI * x).sin(),
            // symmetric about (0.5, 0), hence centered
            TrueFunction::SmoothStep => 2.0 * sigmoid(SMOOTH_STEP_SLOPE * (x - 0.5)) - 1.0,
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            TrueFunction::Zero => "0",
            TrueFunction::Linear => "2x - 1",
            TrueFunction::Quadratic => "12(x - 0.5)^2 - 1",
            TrueFunction::Sine => "sin(2 pi x)",
            TrueFunction::SmoothStep => "2 / (1 + exp(-10 (x - 0.5))) - 1",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrueFunction::Zero => "zero",
            TrueFunction::Linear => "linear",
            TrueFunction::Quadratic => "quadratic",
            TrueFunction::Sine => "sine",
            TrueFunction::SmoothStep => "smooth-step",
        }
    }
}

impl FromStr for TrueFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "zero" => TrueFunction::Zero,
            "linear" => TrueFunction::Linear,
            "quadratic" => TrueFunction::Quadratic,
            "sine" => TrueFunction::Sine,
            "smooth-step" | "smooth_step" | "smoothstep" => TrueFunction::SmoothStep,
            other => return Err(Error::invalid(format!("unknown function {other:?}"))),
        })
    }
}

/// `sigmoid(μ + σ ε)`, `ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LogitNormal {
    fn default() -> Self {
        LogitNormal { mu: 0.0, sigma: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// One function per predictor.
    pub true_functions: Vec<TrueFunction>,
    /// One coefficient per covariate.
    pub true_gamma: Vec<f64>,
    pub true_nu: f64,
    /// One distribution per predictor.
    pub predictor_distribution: Vec<LogitNormal>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with logit-normal(0, 2) predictors.
    pub fn new(n: usize, true_functions: Vec<TrueFunction>, true_gamma: Vec<f64>, true_nu: f64, seed: u64) -> Self {
        let predictor_distribution = vec![LogitNormal::default(); true_functions.len()];
        SyntheticSpec {
            n,
            true_functions,
            true_gamma,
            true_nu,
            predictor_distribution,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.predictor_distribution.len() != self.true_functions.len() {
            return Err(Error::invalid("need one predictor distribution per function"));
        }
        if self.predictor_distribution.iter().any(|d| !(d.sigma > 0.0) || !d.mu.is_finite()) {
            return Err(Error::invalid("logit-normal scales must be positive"));
        }
        if !self.true_nu.is_finite() || self.true_gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("true coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueFunctionRecord {
    pub predictor: String,
    pub function: TrueFunction,
    pub formula: String,
}

/// The generating process behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub covariate_names: Vec<String>,
    pub functions: Vec<TrueFunctionRecord>,
}

impl GroundTruth {
    /// True linear predictor `ν + γᵀz + Σ f_j(p_j)` on raw covariates.
    pub fn linear_predictor(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n_rows())
            .map(|i| {
                let mut eta = self.spec.true_nu;
                for (c, g) in self.spec.true_gamma.iter().enumerate() {
                    eta += g * data.covariates[(i, c)];
                }
                for (j, f) in self.spec.true_functions.iter().enumerate() {
                    eta += f.eval(data.predictors[(i, j)]);
                }
                eta
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

const PREDICTOR_CLIP: f64 = 1e-6;

/// Draw a dataset from `spec`. Every row is its own group and carries a
/// random binary `sex` tag.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    if spec.n == 0 {
        return Err(Error::invalid("synthetic dataset needs at least one row"));
    }
    let (n, p, j) = (spec.n, spec.true_gamma.len(), spec.true_functions.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cov = Vec::with_capacity(n * p);
    let mut pred = Vec::with_capacity(n * j);
    let mut labels = Vec::with_capacity(n);
    let mut sex = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = spec.true_nu;
        for g in &spec.true_gamma {
            let z: f64 = rng.sample(StandardNormal);
            cov.push(z);
            eta += g * z;
        }
        for (f, d) in spec.true_functions.iter().zip(&spec.predictor_distribution) {
            let e: f64 = rng.sample(StandardNormal);
            let x = sigmoid(d.mu + d.sigma * e).clamp(PREDICTOR_CLIP, 1.0 - PREDICTOR_CLIP);
            pred.push(x);
            eta += f.eval(x);
        }
        sex.push(if rng.random::<bool>() { "1" } else { "0" }.to_string());
        labels.push(u8::from(rng.random::<f64>() < sigmoid(eta)));
    }
    let covariate_names: Vec<String> = (1..=p).map(|c| format!("z{c}")).collect();
    let predictor_names: Vec<String> = (1..=j).map(|c| format!("x{c}")).collect();
    let mut tags = BTreeMap::new();
    tags.insert("sex".to_string(), sex);
    let data = Dataset::new(
        covariate_names.clone(),
        predictor_names.clone(),
        labels,
        DMatrix::from_row_slice(n, p, &cov),
        DMatrix::from_row_slice(n, j, &pred),
        (0..n).map(|i| format!("g{i}")).collect(),
        None,
        tags,
    )?;
    let functions = spec
        .true_functions
        .iter()
        .zip(&predictor_names)
        .map(|(f, name)| TrueFunctionRecord {
            predictor: name.clone(),
            function: *f,
            formula: f.formula().to_string(),
        })
        .collect();
    Ok((
        data,
        GroundTruth {
            spec: spec.clone(),
            covariate_names,
            functions,
        },
    ))
}
