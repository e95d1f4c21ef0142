//! Interpretable additive logistic models over predictors bounded in `[0, 1]`.
//!
//! Each predictor enters the linear predictor through a clamped B-spline
//! expansion with quantile knots (one basis dropped per predictor so the
//! global intercept stays identifiable), clinical covariates enter linearly,
//! and the whole design is fitted by L2-penalized logistic regression. The
//! fitted spline blocks are turned back into centered effect curves for
//! inspection.
//!
//! Module map:
//!
//! * [`splines`] builds and evaluates the per-predictor bases.
//! * [`design`] holds [`Dataset`], [`ModelSpec`] and the design matrix.
//! * [`fit`] minimizes the penalized negative log-likelihood.
//! * [`metrics`] computes AUROC / AUPRC / F1 with bootstrap intervals.
//! * [`tune`] grid-searches the penalty on a validation split.
//! * [`interpret`] reconstructs and exports the centered effect curves.
//! * [`data_io`] loads CSV data, splits by group and simulates data.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod design;
pub mod error;
pub mod fit;
pub mod interpret;
pub mod metrics;
pub mod quadrature;
pub mod splines;
pub mod tune;

pub use design::{Dataset, ModelSpec, SpecOptions, Standardization};
pub use error::{Error, Result};
pub use fit::{FitDiagnostics, FitOptions, FittedModel};
pub use interpret::CurveTable;
pub use metrics::{MetricEstimate, MetricKind, MetricReport};
pub use splines::SplineBasis;
pub use tune::TuneResult;

/// Default B-spline order (cubic pieces).
pub const DEFAULT_ORDER: usize = 4;

/// Default penalty grid searched by [`tune::grid_search`].
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.001, 0.01, 1.0, 10.0, 100.0, 1000.0];

/// Default number of bootstrap replicates for confidence intervals.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
pub fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}
