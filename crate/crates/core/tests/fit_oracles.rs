mod common;

use std::collections::BTreeMap;

use common::*;
use gamspline::design::build_design;
use gamspline::fit::{fit_design, fit_model, objective, PenalizedLogistic};
use gamspline::{sigmoid, Dataset, Error, FitOptions, FittedModel, ModelSpec, SpecOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn problem_fit(x: &DMatrix<f64>, y: &[u8], lambda: f64, opts: &FitOptions) -> (DVector<f64>, gamspline::FitDiagnostics) {
    PenalizedLogistic::new(x, y, lambda).unwrap().minimize(opts).unwrap()
}

#[test]
fn objective_at_zero_is_n_log2() {
    let mut r = rng(1);
    let x = random_design(&mut r, 17, 4);
    let y = random_labels(&mut r, 17);
    let p = PenalizedLogistic::new(&x, &y, 3.0).unwrap();
    let f = p.objective(&DVector::zeros(4)).unwrap();
    assert!((f - 17.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn single_sample_objective() {
    let x = DMatrix::from_element(1, 1, 1.0);
    let p = PenalizedLogistic::new(&x, &[1], 0.0).unwrap();
    assert!((p.objective(&DVector::zeros(1)).unwrap() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn objective_matches_high_precision_value() {
    // x_ik = sin(4i + k + 1) (k>0), x_i0 = 1, θ_k = 1.5 cos(k+1),
    // y_i = [i mod 3 == 0], λ = 0.7; reference from 50-digit mpmath.
    let (n, d) = (20, 4);
    let x = DMatrix::from_fn(n, d, |i, k| if k == 0 { 1.0 } else { ((i * d + k + 1) as f64).sin() });
    let theta = DVector::from_fn(d, |k, _| 1.5 * ((k + 1) as f64).cos());
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let f = PenalizedLogistic::new(&x, &y, 0.7).unwrap().objective(&theta).unwrap();
    let reference = 33.551_489_457_057_69;
    assert!((f - reference).abs() < 1e-10, "{f} vs {reference}");
}

#[test]
fn objective_is_stable_for_huge_linear_predictors() {
    let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let p = PenalizedLogistic::new(&x, &[1, 0], 0.0).unwrap();
    let f = p.objective(&DVector::from_element(1, 1e4)).unwrap();
    assert!((0.0..1e-300).contains(&f));
    let f = p.objective(&DVector::from_element(1, -1e4)).unwrap();
    assert!((f - 2e4).abs() < 1e-9);
    assert!(p.gradient(&DVector::from_element(1, -1e4)).unwrap().iter().all(|g| g.is_finite()));
}

#[test]
fn non_finite_theta_rejected() {
    let x = DMatrix::from_element(2, 1, 1.0);
    let p = PenalizedLogistic::new(&x, &[1, 0], 0.0).unwrap();
    assert!(matches!(p.objective(&DVector::from_element(1, f64::NAN)), Err(Error::InvalidInput(_))));
    assert!(matches!(p.gradient(&DVector::from_element(1, f64::INFINITY)), Err(Error::InvalidInput(_))));
    assert!(matches!(p.objective(&DVector::zeros(2)), Err(Error::InvalidInput(_))));
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(2);
    let x = random_design(&mut r, 20, 6);
    let y = random_labels(&mut r, 20);
    let p = PenalizedLogistic::new(&x, &y, 1.0).unwrap();
    let theta = random_vector(&mut r, 6, 0.7);
    let g = p.gradient(&theta).unwrap();
    let h = 1e-5;
    for k in 0..6 {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[k] += h;
        tm[k] -= h;
        let fd = (p.objective(&tp).unwrap() - p.objective(&tm).unwrap()) / (2.0 * h);
        let rel = (fd - g[k]).abs() / g[k].abs().max(1e-8);
        assert!(rel < 1e-6, "coord {k}: {fd} vs {}", g[k]);
    }
}

#[test]
fn gradient_zero_for_balanced_intercept_only() {
    let x = DMatrix::from_element(4, 1, 1.0);
    let p = PenalizedLogistic::new(&x, &[1, 0, 1, 0], 0.0).unwrap();
    assert_eq!(p.gradient(&DVector::zeros(1)).unwrap()[0], 0.0);
}

#[test]
fn intercept_only_fit_hits_logit_of_rate() {
    let y: Vec<u8> = (0..100).map(|i| u8::from(i % 10 < 3)).collect();
    let x = DMatrix::from_element(100, 1, 1.0);
    let (theta, d) = problem_fit(&x, &y, 0.0, &FitOptions::default());
    assert!(d.converged);
    assert!((theta[0] - (0.3f64 / 0.7).ln()).abs() < 1e-8);
}

#[test]
fn huge_penalty_shrinks_all_but_intercept() {
    let data = random_dataset(3, 200, 3, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions { lambda: 1e6, num_basis: Some(6), ..Default::default() }).unwrap();
    let m = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    let gnorm = m.gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    let anorm = m.alpha.iter().flatten().map(|a| a * a).sum::<f64>().sqrt();
    assert!(gnorm + anorm < 1e-3, "{gnorm} {anorm}");
    let ybar = data.positive_rate();
    assert!((m.nu - (ybar / (1.0 - ybar)).ln()).abs() < 1e-3);
}

#[test]
fn newton_matches_gradient_descent_oracle() {
    let mut r = rng(4);
    let x = random_design(&mut r, 50, 5);
    let y = random_labels(&mut r, 50);
    let lambda = 1.0;
    let p = PenalizedLogistic::new(&x, &y, lambda).unwrap();
    let (_, d) = p.minimize(&FitOptions::default()).unwrap();

    // plain gradient descent with step 1/L, L = σ_max(X)²/4 + 2λ
    let smax = x.clone().svd(false, false).singular_values.max();
    let step = 1.0 / (smax * smax / 4.0 + 2.0 * lambda);
    let mut theta = DVector::zeros(5);
    for _ in 0..200_000 {
        let g = p.gradient(&theta).unwrap();
        if g.amax() < 1e-11 {
            break;
        }
        theta -= g * step;
    }
    let f_gd = p.objective(&theta).unwrap();
    assert!((d.objective - f_gd).abs() < 1e-10, "{} vs {f_gd}", d.objective);
}

#[test]
fn unpenalized_linear_fit_matches_irls() {
    let mut r = rng(5);
    let n = 80;
    let x = random_design(&mut r, n, 4); // intercept + 3 variables
    let truth = DVector::from_vec(vec![0.2, 1.0, -0.5, 0.3]);
    let eta = &x * &truth;
    let y: Vec<u8> = eta.iter().map(|&e| u8::from(rand::Rng::random::<f64>(&mut r) < sigmoid(e))).collect();
    let (theta, d) = problem_fit(&x, &y, 0.0, &FitOptions::default());
    assert!(d.converged);

    // textbook IRLS with LU solves
    let mut beta = DVector::zeros(4);
    for _ in 0..50 {
        let eta = &x * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + (-e).exp())).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let z = DVector::from_fn(n, |i, _| eta[i] + (f64::from(y[i]) - mu[i]) / w[i]);
        let mut xtw = x.transpose();
        for (i, wi) in w.iter().enumerate() {
            xtw.column_mut(i).scale_mut(*wi);
        }
        beta = (&xtw * &x).lu().solve(&(&xtw * z)).unwrap();
    }
    assert!((theta - beta).amax() < 1e-8);
}

#[test]
fn descent_is_monotone() {
    let mut r = rng(6);
    let x = random_design(&mut r, 60, 8);
    let y = random_labels(&mut r, 60);
    let p = PenalizedLogistic::new(&x, &y, 0.1).unwrap();
    let mut prev = p.objective(&DVector::zeros(8)).unwrap();
    for it in 1..15 {
        let (_, d) = p.minimize(&FitOptions { max_iter: it, ..Default::default() }).unwrap();
        assert!(d.objective <= prev + 1e-12 * prev.abs(), "iteration {it} increased the objective");
        prev = d.objective;
    }
}

#[test]
fn converged_fit_is_stationary() {
    let mut r = rng(7);
    let x = random_design(&mut r, 40, 3);
    let y = random_labels(&mut r, 40);
    let p = PenalizedLogistic::new(&x, &y, 0.0).unwrap();
    let (theta, d) = p.minimize(&FitOptions::default()).unwrap();
    assert!(d.converged && d.gradient_norm <= 1e-8);
    assert!(p.gradient(&theta).unwrap().amax() < 1e-8);
}

#[test]
fn separable_data_returns_without_error() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
    let (theta, d) = problem_fit(&x, &[0, 0, 1, 1], 0.0, &FitOptions { max_iter: 5, ..Default::default() });
    assert!(!d.converged);
    assert_eq!(d.iterations, 5);
    assert!(theta[1] > 0.0 && d.objective < 4.0 * 2f64.ln());
    // the slope grows without bound, so a converged flag can only come from a vanishing gradient
    let (theta, d) = problem_fit(&x, &[0, 0, 1, 1], 0.0, &FitOptions::default());
    assert!(!d.converged || d.gradient_norm <= 1e-8);
    assert!(theta[1] > 5.0);
}

#[test]
fn mean_prediction_matches_label_rate_without_penalty() {
    let data = random_dataset(8, 300, 2, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions { lambda: 0.0, num_basis: Some(5), ..Default::default() }).unwrap();
    let m = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    assert!(m.diagnostics.converged);
    let pr = m.predict_proba(&data).unwrap();
    let mean = pr.iter().sum::<f64>() / pr.len() as f64;
    assert!((mean - data.positive_rate()).abs() < 1e-6);
}

#[test]
fn zero_model_predicts_half_and_intercept_is_monotone() {
    let data = random_dataset(9, 30, 2, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions { num_basis: Some(5), ..Default::default() }).unwrap();
    let d = gamspline::FitDiagnostics { objective: 0.0, gradient_norm: 0.0, iterations: 0, converged: true };
    let zero = FittedModel::from_theta(spec.clone(), &vec![0.0; spec.n_columns()], d.clone());
    assert!(zero.predict_proba(&data).unwrap().iter().all(|&p| p == 0.5));

    let mut r = rng(10);
    let theta = random_vector(&mut r, spec.n_columns(), 0.5);
    let m = FittedModel::from_theta(spec.clone(), theta.as_slice(), d.clone());
    let mut shifted = m.clone();
    shifted.nu += 0.25;
    let (a, b) = (m.predict_proba(&data).unwrap(), shifted.predict_proba(&data).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| y > x));
    assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn model_json_round_trip_is_exact() {
    let data = random_dataset(11, 120, 2, 3);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let m = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(m, back);
    assert_eq!(m.to_json().unwrap(), back.to_json().unwrap());
    let bumped = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
    assert!(FittedModel::from_json(&bumped).is_err());
}

#[test]
fn prediction_rejects_other_schema() {
    let data = random_dataset(12, 50, 2, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let m = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    let other = random_dataset(12, 50, 1, 2);
    assert!(matches!(m.predict_proba(&other), Err(Error::InvalidInput(_))));
}

#[test]
fn fit_is_deterministic() {
    let data = random_dataset(13, 150, 3, 2);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let a = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    let b = fit_model(&spec, &data, &FitOptions::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    // objective wrapper agrees with the diagnostics
    let x = build_design(&spec, &data).unwrap();
    let f = objective(&spec, &x, &data.labels, &a.theta()).unwrap();
    assert_eq!(f, a.diagnostics.objective);
}

#[test]
fn fit_design_checks_width() {
    let data = random_dataset(14, 40, 1, 1);
    let spec = ModelSpec::from_training(&data, SpecOptions::default()).unwrap();
    let x = DMatrix::zeros(40, 2);
    assert!(matches!(fit_design(&spec, &x, &data.labels, &FitOptions::default()), Err(Error::InvalidInput(_))));
    let _ = Dataset::clone(&data);
    let _ = BTreeMap::<String, Vec<String>>::new();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn objective_is_convex_along_segments(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = random_design(&mut r, 25, 5);
        let y = random_labels(&mut r, 25);
        let p = PenalizedLogistic::new(&x, &y, 0.3).unwrap();
        let a = random_vector(&mut r, 5, 2.0);
        let b = random_vector(&mut r, 5, 2.0);
        let mid = (&a + &b) * 0.5;
        let chord = 0.5 * (p.objective(&a).unwrap() + p.objective(&b).unwrap());
        prop_assert!(p.objective(&mid).unwrap() <= chord + 1e-12 * chord.abs());
    }

    #[test]
    fn penalized_solution_is_start_independent(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = random_design(&mut r, 30, 4);
        let y = random_labels(&mut r, 30);
        let p = PenalizedLogistic::new(&x, &y, 0.5).unwrap();
        let (t0, _) = p.minimize(&FitOptions::default()).unwrap();
        let start = random_vector(&mut r, 4, 3.0);
        let (t1, d1) = p.minimize(&FitOptions { initial: Some(start.as_slice().to_vec()), ..Default::default() }).unwrap();
        prop_assert!(d1.converged);
        prop_assert!((t0 - t1).amax() < 1e-6);
    }
}
