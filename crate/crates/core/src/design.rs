//! Datasets, model specifications and the identifiable design matrix.
//!
//! Column layout of the design: the all-ones intercept column, then the
//! standardized covariates, then for every predictor its spline block with
//! the dropped basis omitted (or, for the linear baseline, the raw
//! predictor value).

use std::collections::BTreeMap;
use std::ops::Range;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::{self, quantile_sorted, SplineBasis};
use crate::DEFAULT_ORDER;

/// Labelled rows with linear covariates and bounded predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub predictor_names: Vec<String>,
    /// Binary outcome per row.
    pub labels: Vec<u8>,
    /// `n × p` covariates, unstandardized.
    pub covariates: DMatrix<f64>,
    /// `n × J` predictors in `[0, 1]`.
    pub predictors: DMatrix<f64>,
    pub group_ids: Vec<String>,
    pub timestamps: Option<Vec<f64>>,
    /// Tag name to one category per row.
    pub tags: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    /// Assemble a dataset, checking alignment, labels and predictor range.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        covariate_names: Vec<String>,
        predictor_names: Vec<String>,
        labels: Vec<u8>,
        covariates: DMatrix<f64>,
        predictors: DMatrix<f64>,
        group_ids: Vec<String>,
        timestamps: Option<Vec<f64>>,
        tags: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if covariates.nrows() != n || predictors.nrows() != n || group_ids.len() != n {
            return Err(Error::invalid("dataset columns are not row-aligned"));
        }
        if covariates.ncols() != covariate_names.len() || predictors.ncols() != predictor_names.len() {
            return Err(Error::invalid("column names do not match matrix widths"));
        }
        if timestamps.as_ref().is_some_and(|t| t.len() != n) {
            return Err(Error::invalid("timestamps are not row-aligned"));
        }
        for (name, cats) in &tags {
            if cats.len() != n {
                return Err(Error::invalid(format!("tag {name} is not row-aligned")));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::invalid(format!("label in row {} is not 0 or 1", i + 1)));
        }
        if let Some(v) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite covariate value {v}")));
        }
        for j in 0..predictors.ncols() {
            for i in 0..n {
                let v = predictors[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain {
                        what: format!("row {}, predictor {}", i + 1, predictor_names[j]),
                        value: v,
                    });
                }
            }
        }
        Ok(Dataset {
            covariate_names,
            predictor_names,
            labels,
            covariates,
            predictors,
            group_ids,
            timestamps,
            tags,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.ncols()
    }

    pub fn predictor_column(&self, j: usize) -> Vec<f64> {
        self.predictors.column(j).iter().copied().collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows() as f64
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            covariate_names: self.covariate_names.clone(),
            predictor_names: self.predictor_names.clone(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            covariates: self.covariates.select_rows(rows.iter()),
            predictors: self.predictors.select_rows(rows.iter()),
            group_ids: rows.iter().map(|&i| self.group_ids[i].clone()).collect(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|t| rows.iter().map(|&i| t[i]).collect()),
            tags: self
                .tags
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }
}

/// Location and scale applied to one covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
    /// Zero-variance column, passed through unchanged.
    pub constant: bool,
}

impl ColumnScale {
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            v
        } else {
            (v - self.mean) / self.std
        }
    }
}

/// Z-score statistics estimated on the training covariates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnScale>,
}

/// Column means and population standard deviations of `covariates`.
pub fn standardize_fit(covariates: &DMatrix<f64>) -> Result<Standardization> {
    let n = covariates.nrows();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    let columns = covariates
        .column_iter()
        .enumerate()
        .map(|(j, col)| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let constant = !(std > 0.0);
            if constant {
                warn!("covariate column {j} has zero variance; passing it through unscaled");
            }
            ColumnScale { mean, std, constant }
        })
        .collect();
    Ok(Standardization { columns })
}

impl Standardization {
    pub fn transform(&self, covariates: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = covariates.clone();
        for (j, scale) in self.columns.iter().enumerate() {
            out.column_mut(j).apply(|v| *v = scale.apply(*v));
        }
        out
    }
}

/// Five-number summary of a predictor's training values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSupport {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl PredictorSupport {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        PredictorSupport {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

/// Knobs for [`ModelSpec::from_training`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecOptions {
    pub order: usize,
    /// Overrides the `2 n^(1/5)` rule when set.
    pub num_basis: Option<usize>,
    pub lambda: f64,
    pub spline_enabled: bool,
}

impl Default for SpecOptions {
    fn default() -> Self {
        SpecOptions {
            order: DEFAULT_ORDER,
            num_basis: None,
            lambda: 1.0,
            spline_enabled: true,
        }
    }
}

/// Everything needed to turn a [`Dataset`] into a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub covariate_names: Vec<String>,
    pub predictor_names: Vec<String>,
    pub order: usize,
    /// One basis per predictor; empty for the linear baseline.
    pub bases: Vec<SplineBasis>,
    /// Zero-based index of the basis removed from each predictor's block.
    pub dropped_index: Vec<usize>,
    /// Shared penalty on covariate and spline coefficients.
    pub lambda: f64,
    pub standardization: Standardization,
    pub spline_enabled: bool,
    /// Training-value summary for each predictor.
    pub support: Vec<PredictorSupport>,
}

impl ModelSpec {
    /// Build bases and standardization from training rows only.
    pub fn from_training(train: &Dataset, opts: SpecOptions) -> Result<Self> {
        if !(opts.lambda >= 0.0) || !opts.lambda.is_finite() {
            return Err(Error::invalid(format!("penalty must be finite and >= 0, got {}", opts.lambda)));
        }
        let standardization = standardize_fit(&train.covariates)?;
        let columns: Vec<Vec<f64>> = (0..train.n_predictors())
            .map(|j| train.predictor_column(j))
            .collect();
        let support = columns.iter().map(|c| PredictorSupport::from_values(c)).collect();
        let (bases, dropped_index) = if opts.spline_enabled {
            let k = match opts.num_basis {
                Some(k) => k,
                None => splines::choose_num_basis(train.n_rows(), opts.order)?,
            };
            let bases = columns
                .iter()
                .map(|c| splines::build_basis(c, k, opts.order))
                .collect::<Result<Vec<_>>>()?;
            let dropped = bases.iter().map(|b| b.num_basis() - 1).collect();
            (bases, dropped)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(ModelSpec {
            covariate_names: train.covariate_names.clone(),
            predictor_names: train.predictor_names.clone(),
            order: opts.order,
            bases,
            dropped_index,
            lambda: opts.lambda,
            standardization,
            spline_enabled: opts.spline_enabled,
            support,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ModelSpec {
            lambda,
            ..self.clone()
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_names.len()
    }

    /// Width of the predictor `j` block in the design.
    pub fn block_width(&self, j: usize) -> usize {
        if self.spline_enabled {
            self.bases[j].num_basis() - 1
        } else {
            1
        }
    }

    /// Design columns occupied by predictor `j`.
    pub fn block_range(&self, j: usize) -> Range<usize> {
        let start = 1 + self.n_covariates() + (0..j).map(|i| self.block_width(i)).sum::<usize>();
        start..start + self.block_width(j)
    }

    /// Total design width `1 + p + Σ_j (K_j − 1)` (or `1 + p + J`).
    pub fn n_columns(&self) -> usize {
        1 + self.n_covariates() + (0..self.n_predictors()).map(|j| self.block_width(j)).sum::<usize>()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["(intercept)".to_string()];
        names.extend(self.covariate_names.iter().cloned());
        for (j, name) in self.predictor_names.iter().enumerate() {
            if self.spline_enabled {
                let k = self.bases[j].num_basis();
                names.extend((0..k).filter(|&b| b != self.dropped_index[j]).map(|b| format!("{name}[b{}]", b + 1)));
            } else {
                names.push(name.clone());
            }
        }
        names
    }

    pub(crate) fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if data.covariate_names != self.covariate_names {
            return Err(Error::invalid(format!(
                "covariates {:?} do not match the model's {:?}",
                data.covariate_names, self.covariate_names
            )));
        }
        if data.predictor_names != self.predictor_names {
            return Err(Error::invalid(format!(
                "predictors {:?} do not match the model's {:?}",
                data.predictor_names, self.predictor_names
            )));
        }
        if self.spline_enabled && (self.bases.len() != self.n_predictors() || self.dropped_index.len() != self.n_predictors()) {
            return Err(Error::invalid("spec has one basis per predictor missing"));
        }
        if self.standardization.columns.len() != self.n_covariates() {
            return Err(Error::invalid("standardization width does not match covariates"));
        }
        Ok(())
    }

    fn fill_design(&self, data: &Dataset, drop: bool) -> Result<DMatrix<f64>> {
        self.check_compatible(data)?;
        let n = data.n_rows();
        let p = self.n_covariates();
        let width = if drop || !self.spline_enabled {
            self.n_columns()
        } else {
            1 + p + self.bases.iter().map(|b| b.num_basis()).sum::<usize>()
        };
        let mut x = DMatrix::<f64>::zeros(n, width);
        x.column_mut(0).fill(1.0);
        for (c, scale) in self.standardization.columns.iter().enumerate() {
            for i in 0..n {
                x[(i, 1 + c)] = scale.apply(data.covariates[(i, c)]);
            }
        }
        let mut col = 1 + p;
        for j in 0..self.n_predictors() {
            if !self.spline_enabled {
                for i in 0..n {
                    x[(i, col)] = data.predictors[(i, j)];
                }
                col += 1;
                continue;
            }
            let basis = &self.bases[j];
            let dropped = if drop { Some(self.dropped_index[j]) } else { None };
            for i in 0..n {
                let (first, vals) = basis.eval_nonzero(data.predictors[(i, j)]);
                for (r, v) in vals.into_iter().enumerate() {
                    let k = first + r;
                    let offset = match dropped {
                        Some(d) if k == d => continue,
                        Some(d) if k > d => k - 1,
                        _ => k,
                    };
                    x[(i, col + offset)] = v;
                }
            }
            col += basis.num_basis() - usize::from(drop);
        }
        debug_assert_eq!(col, width);
        Ok(x)
    }
}

/// Identifiable design matrix: intercept, standardized covariates, spline
/// blocks without their dropped basis (raw predictors for the baseline).
pub fn build_design(spec: &ModelSpec, data: &Dataset) -> Result<DMatrix<f64>> {
    spec.fill_design(data, true)
}

/// Design with every basis kept. Rank-deficient by one per predictor; used
/// for identifiability checks.
pub fn build_design_undropped(spec: &ModelSpec, data: &Dataset) -> Result<DMatrix<f64>> {
    spec.fill_design(data, false)
}
