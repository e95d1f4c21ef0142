mod common;

use std::collections::BTreeMap;

use common::*;
use gamspline::design::{build_design, build_design_undropped};
use gamspline::{Dataset, ModelSpec, SpecOptions};
use nalgebra::DMatrix;

#[test]
fn retained_design_has_full_rank_and_undropped_loses_one_per_predictor() {
    for (seed, p, j) in [(40, 2, 3), (41, 0, 1), (42, 4, 2), (43, 1, 5)] {
        let data = random_dataset(seed, 200, p, j);
        let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
        let x = build_design(&spec, &data).unwrap();
        assert_eq!(x.ncols(), spec.n_columns());
        assert_eq!(numerical_rank(&x, 1e-10), x.ncols(), "seed {seed}");
        let full = build_design_undropped(&spec, &data).unwrap();
        assert_eq!(full.ncols(), x.ncols() + j);
        assert_eq!(numerical_rank(&full, 1e-10), full.ncols() - j, "seed {seed}");
    }
}

#[test]
fn linear_baseline_width() {
    let data = random_dataset(44, 30, 2, 3);
    let spec = ModelSpec::from_training(&data, SpecOptions { spline_enabled: false, ..Default::default() }).unwrap();
    assert_eq!(spec.n_columns(), 6);
    let x = build_design(&spec, &data).unwrap();
    assert_eq!(x.ncols(), 6);
    for i in 0..30 {
        for c in 0..3 {
            assert_eq!(x[(i, 3 + c)], data.predictors[(i, c)]);
        }
    }
}

#[test]
fn endpoint_row_with_cubic_basis_and_no_interior_knots() {
    let train = random_dataset(45, 20, 0, 1);
    let spec = ModelSpec::from_training(&train, SpecOptions { num_basis: Some(4), ..Default::default() }).unwrap();
    let row = Dataset::new(
        vec![],
        vec!["q0".into()],
        vec![1],
        DMatrix::zeros(1, 0),
        DMatrix::zeros(1, 1),
        vec!["a".into()],
        None,
        BTreeMap::new(),
    )
    .unwrap();
    let x = build_design(&spec, &row).unwrap();
    assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn retained_block_row_sums_complement_the_dropped_basis() {
    let data = random_dataset(46, 150, 1, 3);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let x = build_design(&spec, &data).unwrap();
    for j in 0..3 {
        let range = spec.block_range(j);
        let basis = &spec.bases[j];
        for i in 0..150 {
            let s: f64 = range.clone().map(|c| x[(i, c)]).sum();
            let dropped = basis.eval(data.predictors[(i, j)])[spec.dropped_index[j]];
            assert!((s - (1.0 - dropped)).abs() < 1e-13);
            assert!((-1e-15..=1.0 + 1e-15).contains(&s));
        }
    }
}

#[test]
fn covariate_block_is_standardized_with_training_statistics() {
    let train = random_dataset(47, 100, 3, 1);
    let spec = ModelSpec::from_training(&train, SpecOptions::default()).unwrap();
    let x = build_design(&spec, &train).unwrap();
    assert!(x.column(0).iter().all(|&v| v == 1.0));
    for c in 1..=3 {
        let col: Vec<f64> = x.column(c).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / 100.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
        assert!(mean.abs() < 1e-12 && (var.sqrt() - 1.0).abs() < 1e-12);
    }
    // other data reuses the training statistics
    let other = random_dataset(48, 10, 3, 1);
    let y = build_design(&spec, &other).unwrap();
    let s = &spec.standardization.columns[0];
    assert_eq!(y[(4, 1)], (other.covariates[(4, 0)] - s.mean) / s.std);
}

#[test]
fn design_is_deterministic_and_checks_shape() {
    let data = random_dataset(49, 80, 2, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let a = build_design(&spec, &data).unwrap();
    let b = build_design(&spec, &data).unwrap();
    assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    let wrong = random_dataset(49, 80, 1, 2);
    assert!(build_design(&spec, &wrong).is_err());
}
