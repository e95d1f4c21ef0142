//! Discrimination metrics, percentile bootstrap intervals and subgroup
//! breakdowns.
//!
//! Ties: AUROC gives half credit to tied positive/negative pairs; PR and F1
//! thresholds are taken at unique score values, so tied rows always switch
//! class together.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::quantile_sorted;

/// Which metric a bootstrap replicate recomputes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Auroc,
    Auprc,
    /// F1 at a frozen operating threshold.
    F1 { threshold: f64 },
}

impl MetricKind {
    pub fn compute(&self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        match *self {
            MetricKind::Auroc => auroc(scores, labels),
            MetricKind::Auprc => auprc(scores, labels),
            MetricKind::F1 { threshold } => f1_at_threshold(scores, labels, threshold),
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => pos += 1,
            _ => return Err(Error::invalid(format!("label {y} is not 0 or 1"))),
        }
    }
    Ok((pos, labels.len() - pos))
}

/// Row indices sorted by descending score.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Cumulative `(tp, fp, threshold)` at each unique score, descending.
fn tied_steps(scores: &[f64], labels: &[u8]) -> Vec<(u64, u64, f64)> {
    let idx = order_desc(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp, fp, s));
    }
    out
}

/// Mann–Whitney AUROC with half credit for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    // Twice the number of concordant pairs, counted exactly.
    let mut twice_u: u64 = 0;
    let mut neg_below = neg as u64;
    let mut prev = (0u64, 0u64);
    for (tp, fp, _) in tied_steps(scores, labels) {
        let p = tp - prev.0;
        let q = fp - prev.1;
        neg_below -= q;
        twice_u += 2 * p * neg_below + p * q;
        prev = (tp, fp);
    }
    Ok(twice_u as f64 / (2 * pos as u64 * neg as u64) as f64)
}

/// Average precision `Σ (R_i − R_{i−1}) P_i` over descending unique scores.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp, _) in tied_steps(scores, labels) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// `2PR/(P+R)` from confusion counts, 0 when there are no true positives.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// F1 with rows predicted positive when `score >= threshold`.
pub fn f1_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("F1 needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= threshold {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(f1_from_counts(tp, fp, pos as u64 - tp))
}

/// Unique score maximizing F1; ties go to the lowest threshold.
pub fn select_f1_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("F1 needs at least one positive".into()));
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    // Descending scan, so `>=` moves ties to the lower threshold.
    for (tp, fp, s) in tied_steps(scores, labels) {
        let f1 = f1_from_counts(tp, fp, pos as u64 - tp);
        if f1 >= best.0 {
            best = (f1, s);
        }
    }
    Ok(best.1)
}

/// Percentile interval plus the bookkeeping of skipped replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub n_boot: usize,
    pub n_undefined: usize,
}

/// Independent random stream for replicate `b`.
fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// 95% percentile bootstrap interval from `n_boot` row resamples.
///
/// Replicates where the metric is undefined are skipped; more than half
/// skipped is an error. Each replicate draws from its own `(seed, index)`
/// stream, so the parallel evaluation is identical to a sequential one.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[u8],
    metric: MetricKind,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapInterval> {
    metric.compute(scores, labels)?;
    if n_boot == 0 {
        return Err(Error::invalid("bootstrap needs at least one replicate"));
    }
    let n = scores.len();
    let replicates: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(seed, b);
            let mut s = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                s.push(scores[i]);
                y.push(labels[i]);
            }
            metric.compute(&s, &y).ok()
        })
        .collect();
    let mut values: Vec<f64> = replicates.iter().flatten().copied().collect();
    let n_undefined = n_boot - values.len();
    if 2 * n_undefined > n_boot {
        return Err(Error::UnstableCi {
            undefined: n_undefined,
            total: n_boot,
        });
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapInterval {
        low: quantile_sorted(&values, 0.025),
        high: quantile_sorted(&values, 0.975),
        n_boot,
        n_undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub undefined_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subgroup {
    pub tag: String,
    pub category: String,
}

/// Point estimates and intervals for one evaluation slice. A metric is
/// `None` when it is undefined on the slice; `notes` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub subgroup: Option<Subgroup>,
    pub n_rows: usize,
    pub n_positive: usize,
    pub auroc: Option<MetricEstimate>,
    pub auprc: Option<MetricEstimate>,
    pub f1: Option<MetricEstimate>,
    pub threshold_used: f64,
    pub n_bootstrap: usize,
    pub notes: Vec<String>,
}

fn estimate(
    scores: &[f64],
    labels: &[u8],
    metric: MetricKind,
    n_boot: usize,
    seed: u64,
    name: &str,
    notes: &mut Vec<String>,
) -> Option<MetricEstimate> {
    let point = match metric.compute(scores, labels) {
        Ok(v) => v,
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            return None;
        }
    };
    match bootstrap_ci(scores, labels, metric, n_boot, seed) {
        Ok(ci) => {
            let (mut lo, mut hi) = (ci.low, ci.high);
            if point < lo || point > hi {
                notes.push(format!(
                    "{name}: percentile interval ({lo}, {hi}) excluded the point estimate and was widened to include it"
                ));
                lo = lo.min(point);
                hi = hi.max(point);
            }
            Some(MetricEstimate {
                point,
                ci_low: lo,
                ci_high: hi,
                undefined_replicates: ci.n_undefined,
            })
        }
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    }
}

/// AUROC, AUPRC and F1 (at `threshold`) with bootstrap intervals.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64, n_boot: usize, seed: u64) -> Result<MetricReport> {
    let (pos, _) = check_inputs(scores, labels)?;
    let mut notes = Vec::new();
    if scores.len() < 2 {
        notes.push("fewer than two rows".to_string());
        return Ok(MetricReport {
            subgroup: None,
            n_rows: scores.len(),
            n_positive: pos,
            auroc: None,
            auprc: None,
            f1: None,
            threshold_used: threshold,
            n_bootstrap: n_boot,
            notes,
        });
    }
    let auroc = estimate(scores, labels, MetricKind::Auroc, n_boot, seed, "auroc", &mut notes);
    let auprc = estimate(scores, labels, MetricKind::Auprc, n_boot, seed, "auprc", &mut notes);
    let f1 = estimate(scores, labels, MetricKind::F1 { threshold }, n_boot, seed, "f1", &mut notes);
    Ok(MetricReport {
        subgroup: None,
        n_rows: scores.len(),
        n_positive: pos,
        auroc,
        auprc,
        f1,
        threshold_used: threshold,
        n_bootstrap: n_boot,
        notes,
    })
}

/// One report per category of `tag_name`, in category order.
pub fn subgroup_report(
    scores: &[f64],
    labels: &[u8],
    tags: &BTreeMap<String, Vec<String>>,
    tag_name: &str,
    threshold: f64,
    n_boot: usize,
    seed: u64,
) -> Result<Vec<MetricReport>> {
    check_inputs(scores, labels)?;
    let cats = tags
        .get(tag_name)
        .ok_or_else(|| Error::invalid(format!("unknown subgroup tag {tag_name:?}")))?;
    if cats.len() != scores.len() {
        return Err(Error::invalid(format!("tag {tag_name:?} is not row-aligned with the scores")));
    }
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in cats.iter().enumerate() {
        rows.entry(c.as_str()).or_default().push(i);
    }
    rows.into_iter()
        .map(|(cat, idx)| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let mut r = evaluate(&s, &y, threshold, n_boot, seed)?;
            r.subgroup = Some(Subgroup {
                tag: tag_name.to_string(),
                category: cat.to_string(),
            });
            Ok(r)
        })
        .collect()
}

fn cell(e: &Option<MetricEstimate>) -> String {
    match e {
        Some(e) => format!(
            "{:.1} ({:.1}\u{2013}{:.1})",
            100.0 * e.point,
            100.0 * e.ci_low,
            100.0 * e.ci_high
        ),
        None => "undefined".to_string(),
    }
}

/// Plain-text table, one line per report, metrics in percent as
/// `point (low–high)`.
pub fn render_table(reports: &[MetricReport]) -> String {
    let label = |r: &MetricReport| match &r.subgroup {
        Some(s) => format!("{}={}", s.tag, s.category),
        None => "overall".to_string(),
    };
    let w = reports.iter().map(|r| label(r).len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:>6}  {:<20}  {:<20}  {:<20}", "slice", "n", "AUROC", "AUPRC", "F1");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<w$}  {:>6}  {:<20}  {:<20}  {:<20}",
            label(r),
            r.n_rows,
            cell(&r.auroc),
            cell(&r.auprc),
            cell(&r.f1)
        );
    }
    out
}
