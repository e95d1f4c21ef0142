#![allow(dead_code)]

use std::collections::BTreeMap;

use gamspline::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Intercept column plus standard-normal columns.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) })
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    // keep both classes present
    y[0] = 0;
    y[n - 1] = 1;
    y
}

pub fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Dataset with `p` normal covariates and `j` uniform predictors.
pub fn random_dataset(seed: u64, n: usize, p: usize, j: usize) -> Dataset {
    let mut r = rng(seed);
    let cov = DMatrix::from_fn(n, p, |_, _| r.sample(StandardNormal));
    let pred = DMatrix::from_fn(n, j, |_, _| r.random::<f64>());
    let labels = random_labels(&mut r, n);
    Dataset::new(
        (0..p).map(|c| format!("z{c}")).collect(),
        (0..j).map(|c| format!("q{c}")).collect(),
        labels,
        cov,
        pred,
        (0..n).map(|i| format!("g{i}")).collect(),
        None,
        BTreeMap::new(),
    )
    .unwrap()
}

/// Singular values below `rel * max` counted as zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    sv.iter().filter(|&&s| s > rel * max).count()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

// ---- brute-force metric oracles ----

pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..scores.len() {
        if labels[i] != 1 {
            continue;
        }
        for k in 0..scores.len() {
            if labels[k] != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[k] {
                twice += 2;
            } else if scores[i] == scores[k] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn unique_desc(scores: &[f64]) -> Vec<f64> {
    let mut u = scores.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    u.dedup();
    u
}

fn counts_at(scores: &[f64], labels: &[u8], t: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= t {
            if y == 1 {
                tp += 1
            } else {
                fp += 1
            }
        }
    }
    (tp, fp)
}

pub fn ap_enumerate(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for t in unique_desc(scores) {
        let (tp, fp) = counts_at(scores, labels, t);
        let r = tp as f64 / pos;
        let p = tp as f64 / (tp + fp) as f64;
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    ap
}

pub fn f1_direct(scores: &[f64], labels: &[u8], t: f64) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let (tp, fp) = counts_at(scores, labels, t);
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / pos as f64;
    2.0 * p * r / (p + r)
}

/// Exhaustive scan with exact rational F1 comparison; ties to the lowest
/// threshold.
pub fn best_threshold_exact(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as u128;
    let mut best: Option<(u128, u128, f64)> = None;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    for t in thresholds {
        let (tp, fp) = counts_at(scores, labels, t);
        let (tp, fp) = (tp as u128, fp as u128);
        let (num, den) = (2 * tp, 2 * tp + fp + (pos - tp));
        let better = match best {
            None => true,
            // strictly better only: ascending scan keeps the lowest on ties
            Some((bn, bd, _)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t));
        }
    }
    best.unwrap().2
}
