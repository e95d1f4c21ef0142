mod common;

use std::collections::BTreeMap;

use common::*;
use gamspline::metrics::{
    auprc, auroc, bootstrap_ci, evaluate, f1_at_threshold, select_f1_threshold, subgroup_report, MetricKind,
};
use gamspline::Error;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Scores rounded to one decimal so ties are common.
fn tied_instance(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    let s = (0..n).map(|_| (r.random::<f64>() * 10.0).round() / 10.0).collect();
    (s, random_labels(r, n))
}

fn continuous_instance(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    let y = random_labels(r, n);
    let s = y.iter().map(|&y| f64::from(y) * 0.8 + r.sample::<f64, _>(StandardNormal)).collect();
    (s, y)
}

#[test]
fn auroc_trivial_cases() {
    assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    assert!(matches!(auroc(&[0.1, 0.2], &[0, 0]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn auroc_matches_pair_count_exactly() {
    let mut r = rng(20);
    for trial in 0..200 {
        let (s, y) = if trial % 2 == 0 { tied_instance(&mut r, 30) } else { continuous_instance(&mut r, 30) };
        assert_eq!(auroc(&s, &y).unwrap(), auroc_pairs(&s, &y), "trial {trial}");
    }
}

#[test]
fn auprc_trivial_cases() {
    assert_eq!(auprc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(auprc(&[0.9, 0.1, 0.05, 0.0, -1.0], &[1, 0, 0, 0, 0]).unwrap(), 1.0);
    let y = [1, 0, 0, 1, 0, 0, 0, 1, 0, 0];
    assert_eq!(auprc(&[0.4; 10], &y).unwrap(), 0.3);
    assert!(matches!(auprc(&[0.1, 0.2], &[0, 0]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn auprc_matches_threshold_enumeration() {
    let mut r = rng(21);
    for trial in 0..200 {
        let (s, y) = if trial % 2 == 0 { tied_instance(&mut r, 30) } else { continuous_instance(&mut r, 30) };
        let (a, b) = (auprc(&s, &y).unwrap(), ap_enumerate(&s, &y));
        assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
    }
}

#[test]
fn f1_trivial_cases() {
    let s = [0.9, 0.8, 0.3, 0.2];
    let y = [1, 1, 0, 0];
    assert_eq!(f1_at_threshold(&s, &y, 0.8).unwrap(), 1.0);
    assert_eq!(f1_at_threshold(&s, &y, 2.0).unwrap(), 0.0);
    assert_eq!(select_f1_threshold(&s, &y).unwrap(), 0.8);
}

#[test]
fn f1_matches_direct_precision_recall() {
    let mut r = rng(22);
    for _ in 0..100 {
        let (s, y) = tied_instance(&mut r, 30);
        for &t in &s {
            let (a, b) = (f1_at_threshold(&s, &y, t).unwrap(), f1_direct(&s, &y, t));
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn selected_threshold_is_exhaustive_maximizer() {
    let mut r = rng(23);
    for trial in 0..300 {
        let (s, y) = if trial % 2 == 0 { tied_instance(&mut r, 30) } else { continuous_instance(&mut r, 30) };
        let t = select_f1_threshold(&s, &y).unwrap();
        assert_eq!(t, best_threshold_exact(&s, &y), "trial {trial}");
        let best = f1_at_threshold(&s, &y, t).unwrap();
        for &u in &s {
            assert!(best >= f1_at_threshold(&s, &y, u).unwrap());
        }
    }
}

#[test]
fn auroc_invariant_under_increasing_transforms() {
    let mut r = rng(24);
    for _ in 0..50 {
        let (s, y) = tied_instance(&mut r, 40);
        let base = auroc(&s, &y).unwrap();
        let t1: Vec<f64> = s.iter().map(|v| (3.0 * v - 1.0).exp()).collect();
        let t2: Vec<f64> = s.iter().map(|v| v.powi(3) + 7.0).collect();
        assert_eq!(auroc(&t1, &y).unwrap(), base);
        assert_eq!(auroc(&t2, &y).unwrap(), base);
    }
}

#[test]
fn negated_scores_complement_auroc() {
    let mut r = rng(25);
    for _ in 0..50 {
        let (s, y) = continuous_instance(&mut r, 50);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((auroc(&s, &y).unwrap() + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn bootstrap_of_identical_rows_is_degenerate() {
    let s = [0.7; 12];
    let y = [1; 12];
    let ci = bootstrap_ci(&s, &y, MetricKind::Auprc, 200, 3).unwrap();
    assert_eq!((ci.low, ci.high, ci.n_undefined), (1.0, 1.0, 0));
    let ci = bootstrap_ci(&s, &y, MetricKind::F1 { threshold: 0.5 }, 200, 3).unwrap();
    assert_eq!((ci.low, ci.high), (1.0, 1.0));
}

#[test]
fn bootstrap_is_reproducible() {
    let mut r = rng(26);
    let (s, y) = continuous_instance(&mut r, 150);
    for metric in [MetricKind::Auroc, MetricKind::Auprc, MetricKind::F1 { threshold: 0.3 }] {
        let a = bootstrap_ci(&s, &y, metric, 500, 11).unwrap();
        let b = bootstrap_ci(&s, &y, metric, 500, 11).unwrap();
        assert_eq!(a.low.to_bits(), b.low.to_bits());
        assert_eq!(a.high.to_bits(), b.high.to_bits());
        let c = bootstrap_ci(&s, &y, metric, 500, 12).unwrap();
        assert!(c.low != a.low || c.high != a.high);
    }
}

#[test]
fn bootstrap_requires_defined_metric() {
    assert!(matches!(
        bootstrap_ci(&[0.1, 0.2], &[1, 1], MetricKind::Auroc, 10, 0),
        Err(Error::UndefinedMetric(_))
    ));
}

#[test]
fn bootstrap_interval_covers_population_auroc() {
    // positives ~ N(1,1), negatives ~ N(0,1): AUROC = Φ(1/√2)
    let truth = Normal::new(0.0, 1.0).unwrap().cdf(1.0 / 2f64.sqrt());
    let mut r = rng(27);
    let mut covered = 0;
    for trial in 0..100 {
        let y: Vec<u8> = (0..200).map(|i| u8::from(i % 2 == 0)).collect();
        let s: Vec<f64> = y.iter().map(|&y| f64::from(y) + r.sample::<f64, _>(StandardNormal)).collect();
        let ci = bootstrap_ci(&s, &y, MetricKind::Auroc, 1000, 1000 + trial).unwrap();
        if ci.low <= truth && truth <= ci.high {
            covered += 1;
        }
    }
    println!("coverage {covered}/100");
    assert!(covered >= 90, "coverage {covered}/100");
}

#[test]
fn report_intervals_contain_point_and_metrics_in_range() {
    let mut r = rng(28);
    for seed in 0..10 {
        let (s, y) = continuous_instance(&mut r, 60);
        let t = select_f1_threshold(&s, &y).unwrap();
        let rep = evaluate(&s, &y, t, 300, seed).unwrap();
        for e in [rep.auroc, rep.auprc, rep.f1] {
            let e = e.unwrap();
            assert!(e.ci_low <= e.point && e.point <= e.ci_high);
            assert!((0.0..=1.0).contains(&e.ci_low) && (0.0..=1.0).contains(&e.ci_high));
        }
        assert_eq!(rep.n_rows, 60);
        assert_eq!(rep.threshold_used, t);
    }
}

fn stratified(seed: u64, n: usize) -> (Vec<f64>, Vec<u8>, BTreeMap<String, Vec<String>>) {
    // stratum "weak" adds three times the score noise of stratum "strong"
    let mut r = rng(seed);
    let mut s = Vec::new();
    let mut y = Vec::new();
    let mut tag = Vec::new();
    for i in 0..n {
        let weak = i % 2 == 1;
        let label = u8::from(r.random::<f64>() < 0.4);
        let noise: f64 = r.sample(StandardNormal);
        s.push(f64::from(label) + if weak { 3.0 } else { 1.0 } * noise);
        y.push(label);
        tag.push(if weak { "weak" } else { "strong" }.to_string());
    }
    (s, y, BTreeMap::from([("stratum".to_string(), tag)]))
}

#[test]
fn weaker_stratum_has_lower_auroc() {
    let (s, y, tags) = stratified(29, 2000);
    let reps = subgroup_report(&s, &y, &tags, "stratum", 0.5, 200, 1).unwrap();
    assert_eq!(reps.len(), 2);
    let by = |c: &str| reps.iter().find(|r| r.subgroup.as_ref().unwrap().category == c).unwrap();
    let (strong, weak) = (by("strong").auroc.unwrap(), by("weak").auroc.unwrap());
    // design values: Φ(1/√2) ≈ 0.760 and Φ(1/√18) ≈ 0.593
    assert!(weak.point < strong.point);
    assert!(weak.ci_high < strong.ci_low);
    assert_eq!(reps.iter().map(|r| r.n_rows).sum::<usize>(), 2000);
}

#[test]
fn identical_subgroups_give_identical_points() {
    let mut r = rng(30);
    let (s, y) = continuous_instance(&mut r, 40);
    let s2: Vec<f64> = s.iter().chain(&s).copied().collect();
    let y2: Vec<u8> = y.iter().chain(&y).copied().collect();
    let tag: Vec<String> = (0..80).map(|i| if i < 40 { "a" } else { "b" }.to_string()).collect();
    let tags = BTreeMap::from([("copy".to_string(), tag)]);
    let reps = subgroup_report(&s2, &y2, &tags, "copy", 0.4, 100, 5).unwrap();
    assert_eq!(reps[0].auroc.unwrap().point, reps[1].auroc.unwrap().point);
    assert_eq!(reps[0].auprc.unwrap().point, reps[1].auprc.unwrap().point);
    assert_eq!(reps[0].f1.unwrap().point, reps[1].f1.unwrap().point);
}

#[test]
fn single_class_subgroup_is_reported_undefined() {
    let s = vec![0.1, 0.9, 0.3, 0.4, 0.6];
    let y = vec![0, 1, 0, 0, 1];
    let tag = vec!["x", "x", "y", "y", "x"].into_iter().map(String::from).collect();
    let tags = BTreeMap::from([("t".to_string(), tag)]);
    let reps = subgroup_report(&s, &y, &tags, "t", 0.5, 50, 0).unwrap();
    assert_eq!(reps.len(), 2);
    let y_rep = &reps[1];
    assert!(y_rep.auroc.is_none() && y_rep.auprc.is_none());
    assert!(!y_rep.notes.is_empty());
    assert!(matches!(
        subgroup_report(&s, &y, &tags, "missing", 0.5, 50, 0),
        Err(Error::InvalidInput(_))
    ));
}
