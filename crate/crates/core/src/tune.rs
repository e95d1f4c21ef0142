//! Penalty selection by validation AUROC over a fixed grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_design, Dataset, ModelSpec, SpecOptions};
use crate::error::{Error, Result};
use crate::fit::{fit_design, FitDiagnostics, FitOptions, FittedModel};
use crate::metrics::auroc;
use crate::sigmoid;

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub lambda: f64,
    /// Validation AUROC; `None` when the candidate was excluded.
    pub auroc: Option<f64>,
    pub diagnostics: Option<FitDiagnostics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub grid: Vec<f64>,
    /// One record per grid entry, in grid order.
    pub selection_log: Vec<TuneRecord>,
    pub best_lambda: f64,
    pub best_auroc: f64,
    pub best_model: FittedModel,
}

impl TuneResult {
    pub fn validation_aurocs(&self) -> Vec<Option<f64>> {
        self.selection_log.iter().map(|r| r.auroc).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Fit one model per `λ` in `grid` on `train` and keep the one with the
/// highest AUROC on `valid`, preferring the larger `λ` on ties.
///
/// `template` must have been built from `train` (its knots and
/// standardization are reused unchanged for every candidate and for
/// scoring `valid`); its own `λ` is ignored.
pub fn grid_search(
    template: &ModelSpec,
    train: &Dataset,
    valid: &Dataset,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::invalid("penalty grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid(format!("penalty grid value {bad} is not a finite non-negative number")));
    }
    let train_design = build_design(template, train)?;
    let valid_design = build_design(template, valid)?;

    let outcomes: Vec<(TuneRecord, Option<FittedModel>)> = grid
        .par_iter()
        .map(|&lambda| {
            let spec = template.with_lambda(lambda);
            let scored = fit_design(&spec, &train_design, &train.labels, opts).and_then(|model| {
                let eta = &valid_design * model.theta();
                let proba: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
                let auc = auroc(&proba, &valid.labels)?;
                Ok((model, auc))
            });
            match scored {
                Ok((model, auc)) => (
                    TuneRecord {
                        lambda,
                        auroc: Some(auc),
                        diagnostics: Some(model.diagnostics.clone()),
                        error: None,
                    },
                    Some(model),
                ),
                Err(e) => {
                    log::warn!("penalty {lambda} excluded: {e}");
                    let diagnostics = match &e {
                        Error::NumericalFailure { diagnostics, .. } => Some(diagnostics.clone()),
                        _ => None,
                    };
                    (
                        TuneRecord {
                            lambda,
                            auroc: None,
                            diagnostics,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (rec, _)) in outcomes.iter().enumerate() {
        let Some(auc) = rec.auroc else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &outcomes[b].0;
                let cur_auc = cur.auroc.unwrap_or(f64::NEG_INFINITY);
                auc > cur_auc || (auc == cur_auc && rec.lambda >= cur.lambda)
            }
        };
        if better {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::TuningFailure)?;
    let best_lambda = outcomes[best].0.lambda;
    let best_auroc = outcomes[best].0.auroc.unwrap_or(f64::NAN);
    let mut models: Vec<Option<FittedModel>> = Vec::with_capacity(outcomes.len());
    let mut selection_log = Vec::with_capacity(outcomes.len());
    for (rec, m) in outcomes {
        selection_log.push(rec);
        models.push(m);
    }
    let best_model = models.swap_remove(best).ok_or(Error::TuningFailure)?;
    Ok(TuneResult {
        grid: grid.to_vec(),
        selection_log,
        best_lambda,
        best_auroc,
        best_model,
    })
}

/// Build the template from `train` with `opts`, then [`grid_search`].
pub fn tune(
    train: &Dataset,
    valid: &Dataset,
    opts: SpecOptions,
    grid: &[f64],
    fit_opts: &FitOptions,
) -> Result<TuneResult> {
    let template = ModelSpec::from_training(train, opts)?;
    grid_search(&template, train, valid, grid, fit_opts)
}
