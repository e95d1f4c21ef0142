//! L2-penalized logistic fitting by damped Newton iterations.
//!
//! Minimizes
//!
//! ```text
//! Σ_i [softplus(η_i) − y_i η_i] + λ (‖γ‖² + Σ_{j,k} α_{j,k}²),   η = Bθ
//! ```
//!
//! with the intercept left unpenalized. The objective is convex, so Newton
//! steps on the exact Hessian `BᵀWB + 2λD` with Armijo backtracking converge
//! from the zero start.

use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{build_design, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::{sigmoid, softplus};

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const RIDGE_RETRIES: usize = 6;
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop once the gradient sup-norm is at or below this.
    pub tol: f64,
    /// Starting coefficients; zeros when `None`.
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol: 1e-8,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Penalized negative log-likelihood over a fixed design.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedLogistic<'a> {
    design: &'a DMatrix<f64>,
    labels: &'a [u8],
    lambda: f64,
}

impl<'a> PenalizedLogistic<'a> {
    pub fn new(design: &'a DMatrix<f64>, labels: &'a [u8], lambda: f64) -> Result<Self> {
        if design.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but there are {} labels",
                design.nrows(),
                labels.len()
            )));
        }
        if design.ncols() == 0 {
            return Err(Error::invalid("design has no columns"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("penalty must be finite and >= 0, got {lambda}")));
        }
        Ok(PenalizedLogistic { design, labels, lambda })
    }

    pub fn n_params(&self) -> usize {
        self.design.ncols()
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "coefficient vector has length {}, design has {} columns",
                theta.len(),
                self.n_params()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficient vector is not finite"));
        }
        Ok(())
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        self.lambda * theta.rows(1, theta.len() - 1).norm_squared()
    }

    fn eval_unchecked(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.design * theta;
        let nll: f64 = eta
            .iter()
            .zip(self.labels)
            .map(|(&e, &y)| softplus(e) - f64::from(y) * e)
            .sum();
        nll + self.penalty(theta)
    }

    pub fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        Ok(self.eval_unchecked(theta))
    }

    fn gradient_unchecked(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.design * theta;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.labels).map(|(&e, &y)| sigmoid(e) - f64::from(y)),
        );
        let mut g = self.design.tr_mul(&resid);
        for k in 1..g.len() {
            g[k] += 2.0 * self.lambda * theta[k];
        }
        g
    }

    /// `Bᵀ(ŷ − y) + 2λDθ`.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok(self.gradient_unchecked(theta))
    }

    /// `BᵀWB + 2λD` with `W = diag(ŷ(1 − ŷ))`.
    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        Ok(self.hessian_unchecked(theta))
    }

    fn hessian_unchecked(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.design * theta;
        let mut weighted = self.design.clone();
        for (i, &e) in eta.iter().enumerate() {
            let mu = sigmoid(e);
            let w = (mu * (1.0 - mu)).sqrt();
            weighted.row_mut(i).scale_mut(w);
        }
        let mut h = weighted.tr_mul(&weighted);
        for k in 1..h.nrows() {
            h[(k, k)] += 2.0 * self.lambda;
        }
        h
    }

    /// Run damped Newton from `opts.initial` (or zero).
    pub fn minimize(&self, opts: &FitOptions) -> Result<(DVector<f64>, FitDiagnostics)> {
        let d = self.n_params();
        let mut theta = match &opts.initial {
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(d),
        };
        self.check(&theta)?;
        let mut f = self.eval_unchecked(&theta);
        let mut g = self.gradient_unchecked(&theta);
        let mut iterations = 0;

        while iterations < opts.max_iter {
            if g.amax() <= opts.tol {
                break;
            }
            let h = self.hessian_unchecked(&theta);
            let step = match solve_spd(h, &g) {
                Some(s) => s,
                None => {
                    return Err(Error::NumericalFailure {
                        message: "Newton system could not be solved even with ridge boosting".into(),
                        diagnostics: FitDiagnostics {
                            objective: f,
                            gradient_norm: g.amax(),
                            iterations,
                            converged: false,
                        },
                    });
                }
            };
            let slope = g.dot(&step);
            // Below this predicted decrease the objective cannot resolve the
            // change; the full Newton step is taken if it does not visibly
            // increase the objective.
            let noise = ROUNDING_SLACK * (1.0 + f.abs());
            let mut accepted = None;
            if -slope <= noise {
                let ft = self.eval_unchecked(&(&theta + &step));
                if ft <= f + noise {
                    accepted = Some((1.0, ft));
                }
            }
            let mut t = 1.0;
            let mut fallback: Option<(f64, f64)> = None;
            for _ in 0..MAX_HALVINGS {
                if accepted.is_some() {
                    break;
                }
                let trial = &theta + &step * t;
                let ft = self.eval_unchecked(&trial);
                if ft <= f + ARMIJO_C * t * slope {
                    accepted = Some((t, ft));
                    break;
                }
                if ft <= f && fallback.is_none() {
                    fallback = Some((t, ft));
                }
                t *= 0.5;
            }
            let Some((t, ft)) = accepted.or(fallback) else {
                debug!("line search stalled at iteration {iterations}");
                break;
            };
            theta += &step * t;
            f = ft;
            g = self.gradient_unchecked(&theta);
            iterations += 1;
            debug!("newton iter {iterations}: objective {f:.12e}, |g|_inf {:.3e}, step {t}", g.amax());
        }

        let gradient_norm = g.amax();
        Ok((
            theta,
            FitDiagnostics {
                objective: f,
                gradient_norm,
                iterations,
                converged: gradient_norm <= opts.tol,
            },
        ))
    }
}

/// Solve `H x = −g` by Cholesky, boosting the diagonal on failure.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = 1.0 + h.diagonal().amax();
    let rhs = -g;
    for attempt in 0..=RIDGE_RETRIES {
        let mut m = h.clone();
        if attempt > 0 {
            let ridge = scale * 1e-12 * 100f64.powi(attempt as i32 - 1);
            for k in 0..m.nrows() {
                m[(k, k)] += ridge;
            }
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(&rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
    }
    None
}

/// Objective over an explicit design, using the spec's penalty.
pub fn objective(spec: &ModelSpec, design: &DMatrix<f64>, labels: &[u8], theta: &DVector<f64>) -> Result<f64> {
    PenalizedLogistic::new(design, labels, spec.lambda)?.objective(theta)
}

/// Gradient over an explicit design, using the spec's penalty.
pub fn gradient(
    spec: &ModelSpec,
    design: &DMatrix<f64>,
    labels: &[u8],
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    PenalizedLogistic::new(design, labels, spec.lambda)?.gradient(theta)
}

/// A fitted additive model and the spec it was fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    /// Unpenalized intercept.
    pub nu: f64,
    /// Coefficients of the standardized covariates.
    pub gamma: Vec<f64>,
    /// Per-predictor coefficients for the retained bases (a single slope
    /// for the linear baseline).
    pub alpha: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

/// Fit `spec` on `train`.
pub fn fit_model(spec: &ModelSpec, train: &Dataset, opts: &FitOptions) -> Result<FittedModel> {
    let design = build_design(spec, train)?;
    fit_design(spec, &design, &train.labels, opts)
}

/// Fit with a design that was already built from `spec`.
pub fn fit_design(spec: &ModelSpec, design: &DMatrix<f64>, labels: &[u8], opts: &FitOptions) -> Result<FittedModel> {
    if design.ncols() != spec.n_columns() {
        return Err(Error::invalid(format!(
            "design has {} columns, spec expects {}",
            design.ncols(),
            spec.n_columns()
        )));
    }
    let problem = PenalizedLogistic::new(design, labels, spec.lambda)?;
    let (theta, diagnostics) = problem.minimize(opts)?;
    Ok(FittedModel::from_theta(spec.clone(), theta.as_slice(), diagnostics))
}

impl FittedModel {
    /// Split a stacked coefficient vector into intercept, covariate and
    /// per-predictor blocks.
    pub fn from_theta(spec: ModelSpec, theta: &[f64], diagnostics: FitDiagnostics) -> Self {
        let p = spec.n_covariates();
        let alpha = (0..spec.n_predictors())
            .map(|j| theta[spec.block_range(j)].to_vec())
            .collect();
        FittedModel {
            format_version: MODEL_FORMAT_VERSION,
            nu: theta[0],
            gamma: theta[1..1 + p].to_vec(),
            alpha,
            spec,
            diagnostics,
        }
    }

    /// Coefficients stacked in design-column order.
    pub fn theta(&self) -> DVector<f64> {
        let mut v = vec![self.nu];
        v.extend_from_slice(&self.gamma);
        for a in &self.alpha {
            v.extend_from_slice(a);
        }
        DVector::from_vec(v)
    }

    /// `ν + γᵀz + Σ α b(p)` for every row.
    pub fn linear_predictor(&self, data: &Dataset) -> Result<Vec<f64>> {
        let design = build_design(&self.spec, data)?;
        Ok((design * self.theta()).iter().copied().collect())
    }

    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(data)?.into_iter().map(sigmoid).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        let expected = model.spec.n_columns();
        let got = 1 + model.gamma.len() + model.alpha.iter().map(Vec::len).sum::<usize>();
        if got != expected || model.alpha.len() != model.spec.n_predictors() {
            return Err(Error::invalid("model coefficients do not match its spec"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data_io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// `model.predict_proba(data)` as a free function.
pub fn predict_proba(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>> {
    model.predict_proba(data)
}
