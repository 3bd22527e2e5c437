mod common;

use common::{linear_dataset, logistic_dataset};
use ipd_core::estimators::{self, aipw_score, estimate, unified_score, EstimatorConfig, Method, WeightingFamily};
use ipd_core::linalg::Matrix;
use ipd_core::{Dataset, TargetSpec};

fn theta(d: &Dataset, t: &TargetSpec, cfg: EstimatorConfig) -> Vec<f64> {
    estimate(d, t, &cfg).unwrap().theta_hat
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn unified(m: WeightingFamily) -> EstimatorConfig {
    EstimatorConfig::new(Method::Unified).with_weighting(m)
}

fn reductions_hold(d: &Dataset, t: &TargetSpec) {
    let classical = theta(d, t, EstimatorConfig::new(Method::Classical));
    let ppi = theta(d, t, EstimatorConfig::new(Method::Ppi));
    let cases = [
        (unified(WeightingFamily::Zero), &classical, "unified(0)"),
        (unified(WeightingFamily::Identity), &ppi, "unified(I)"),
        (
            EstimatorConfig::new(Method::PpiPlusPlus)
                .with_weighting(WeightingFamily::ScaledIdentity { lambda: Some(1.0) }),
            &ppi,
            "ppi++(1)",
        ),
        (
            EstimatorConfig::new(Method::PpiPlusPlus)
                .with_weighting(WeightingFamily::ScaledIdentity { lambda: Some(0.0) }),
            &classical,
            "ppi++(0)",
        ),
        (
            EstimatorConfig::new(Method::Pspa)
                .with_weighting(WeightingFamily::Diagonal { omega: Some(vec![1.0; t.dim]) }),
            &ppi,
            "pspa(1)",
        ),
        (
            EstimatorConfig::new(Method::Pspa)
                .with_weighting(WeightingFamily::Diagonal { omega: Some(vec![0.0; t.dim]) }),
            &classical,
            "pspa(0)",
        ),
    ];
    for (cfg, expected, name) in cases {
        let got = theta(d, t, cfg);
        assert!(close(&got, expected, 1e-10), "{name}: {got:?} vs {expected:?}");
    }
}

#[test]
fn reductions_on_random_datasets() {
    for s in 0..20 {
        reductions_hold(&linear_dataset(s, 60, 240, 2), &TargetSpec::mean());
        reductions_hold(&linear_dataset(100 + s, 60, 240, 2), &TargetSpec::linear(2, true).unwrap());
        reductions_hold(&logistic_dataset(200 + s, 150, 450), &TargetSpec::logistic(1, true).unwrap());
    }
}

#[test]
fn pspa_equals_ppi_plus_plus_in_one_dimension() {
    for s in 0..10 {
        let d = linear_dataset(300 + s, 50, 200, 1);
        let t = TargetSpec::mean();
        for clamp in [true, false] {
            let a = estimate(&d, &t, &EstimatorConfig::new(Method::PpiPlusPlus).with_clamp(clamp)).unwrap();
            let b = estimate(&d, &t, &EstimatorConfig::new(Method::Pspa).with_clamp(clamp)).unwrap();
            assert!(close(&a.theta_hat, &b.theta_hat, 1e-12));
            assert!(close(&a.std_errors, &b.std_errors, 1e-12));
        }
    }
}

#[test]
fn mean_estimates_are_translation_equivariant() {
    let t = TargetSpec::mean();
    for s in 0..10 {
        let d = linear_dataset(400 + s, 40, 160, 1);
        let c = 3.25;
        let shifted = d.map_outcomes(|v| v + c).unwrap();
        for m in [Method::Naive, Method::Classical, Method::Oracle, Method::Ppi, Method::PpiPlusPlus, Method::Pspa] {
            let a = estimate(&d, &t, &EstimatorConfig::new(m)).unwrap();
            let b = estimate(&shifted, &t, &EstimatorConfig::new(m)).unwrap();
            assert!((b.theta_hat[0] - a.theta_hat[0] - c).abs() < 1e-10, "{m}");
            assert!((b.covariance[0][0] - a.covariance[0][0]).abs() < 1e-10 * a.covariance[0][0].max(1.0), "{m}");
        }
    }
}

#[test]
fn aipw_matches_unified_score_with_full_sample_prediction_average() {
    for s in 0..20 {
        for (d, t) in [
            (linear_dataset(500 + s, 30, 90, 2), TargetSpec::linear(2, true).unwrap()),
            (linear_dataset(600 + s, 30, 70, 1), TargetSpec::mean()),
            (logistic_dataset(700 + s, 40, 60), TargetSpec::logistic(1, true).unwrap()),
        ] {
            let th: Vec<f64> = (0..t.dim).map(|k| 0.1 * (k as f64 + 1.0) - 0.05 * s as f64).collect();
            let n = d.n() as f64;
            let scale = d.n_unlabeled() as f64 / n;
            let m = Matrix::identity(t.dim, t.dim) * scale;
            let a: Vec<f64> = aipw_score(&d, &t, &th).unwrap().iter().map(|v| v / n).collect();
            let u = unified_score(&d, &t, &th, &m).unwrap();
            assert!(close(&a, &u, 1e-12), "{a:?} vs {u:?}");
        }
    }
}

#[test]
fn aipw_mean_score_in_closed_form() {
    // sum_L (theta - y)/pi - (1-pi)/pi sum_L (theta - f) + sum_U (theta - f)
    let d = linear_dataset(9, 25, 75, 1);
    let th = 0.4;
    let pi = 25.0 / 100.0;
    let mut expected = 0.0;
    for r in d.labeled() {
        expected += (th - r.y) / pi - (1.0 - pi) / pi * (th - r.y_hat);
    }
    for r in d.unlabeled() {
        expected += th - r.y_hat;
    }
    let got = aipw_score(&d, &TargetSpec::mean(), &[th]).unwrap()[0];
    assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0));
}

#[test]
fn sandwich_uses_labeled_hessian_and_both_variances() {
    // Mean target, M = I: Var = Var_L(y - f)/n_l + Var_U(f)/n_u.
    let d = linear_dataset(21, 80, 320, 1);
    let t = TargetSpec::mean();
    let r = estimate(&d, &t, &EstimatorConfig::new(Method::Ppi)).unwrap();
    let resid: Vec<f64> = d.labeled().iter().map(|r| r.y - r.y_hat).collect();
    let f_u: Vec<f64> = d.unlabeled().iter().map(|r| r.y_hat).collect();
    let expected = ipd_core::stats::variance(&resid) / 80.0 + ipd_core::stats::variance(&f_u) / 320.0;
    assert!((r.covariance[0][0] - expected).abs() < 1e-14);
    let m = Matrix::identity(1, 1);
    let direct = estimators::sandwich_covariance(&d, &t, &r.theta_hat, &m).unwrap();
    assert!((direct[(0, 0)] - expected).abs() < 1e-14);
}

#[test]
fn oracle_and_naive_use_every_row() {
    let d = linear_dataset(31, 40, 60, 1);
    let t = TargetSpec::mean();
    let all_y: Vec<f64> = d.labeled().iter().map(|r| r.y).chain(d.unlabeled_truth().unwrap().iter().copied()).collect();
    let all_f: Vec<f64> = d.labeled().iter().map(|r| r.y_hat).chain(d.unlabeled().iter().map(|r| r.y_hat)).collect();
    let o = estimate(&d, &t, &EstimatorConfig::new(Method::Oracle)).unwrap();
    let nv = estimate(&d, &t, &EstimatorConfig::new(Method::Naive)).unwrap();
    assert!((o.theta_hat[0] - ipd_core::stats::mean(&all_y)).abs() < 1e-12);
    assert!((nv.theta_hat[0] - ipd_core::stats::mean(&all_f)).abs() < 1e-12);
    assert!((o.covariance[0][0] - ipd_core::stats::variance(&all_y) / 100.0).abs() < 1e-12);
}
