//! Pre-analysis checks on the labeled rows: calibration of predictions
//! against outcomes, side-by-side fits, classification metrics, feature
//! leakage, and the two-part bias decomposition for simulation output.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, Dataset, LabeledRow};
use crate::error::{IpdError, Result};
use crate::estimators::{self, EstimatorConfig, Method};
use crate::linalg::{self, Matrix, Vector};
use crate::stats;
use crate::targets::TargetSpec;

/// Minimum labeled rows for a subgroup calibration to be estimated.
pub const MIN_SUBGROUP_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub n: usize,
    /// Mean of `y_hat - y`.
    pub mean_error: f64,
    pub mse: f64,
    pub correlation: Option<f64>,
    /// Intercept and slope of the regression of `y` on `y_hat`; `None` when
    /// the predictions have zero variance.
    pub calib_intercept: Option<f64>,
    pub calib_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCalibration {
    pub label: String,
    pub n: usize,
    /// `None` when the subgroup is too small to be estimated.
    pub stats: Option<CalibrationStats>,
    pub flagged_small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub overall: CalibrationStats,
    pub subgroups: Vec<SubgroupCalibration>,
    pub notes: Vec<String>,
}

fn calibration_stats(y: &[f64], y_hat: &[f64]) -> CalibrationStats {
    let n = y.len();
    let errors: Vec<f64> = y_hat.iter().zip(y).map(|(f, t)| f - t).collect();
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let var_f = stats::variance(y_hat);
    let (calib_intercept, calib_slope) = if var_f > 0.0 {
        let slope = stats::covariance(y_hat, y) / var_f;
        (Some(stats::mean(y) - slope * stats::mean(y_hat)), Some(slope))
    } else {
        (None, None)
    };
    CalibrationStats {
        n,
        mean_error: stats::mean(&errors),
        mse,
        correlation: stats::correlation(y, y_hat),
        calib_intercept,
        calib_slope,
    }
}

/// Calibration of predictions on the labeled rows, optionally repeated per
/// subgroup. `groups`, when given, labels each labeled row.
pub fn calibration_summary(d: &Dataset, groups: Option<&[String]>) -> Result<CalibrationReport> {
    let lab = d.labeled();
    if lab.len() < 2 {
        return Err(IpdError::InsufficientData { needed: 2, available: lab.len() });
    }
    let y: Vec<f64> = lab.iter().map(|r| r.y).collect();
    let f: Vec<f64> = lab.iter().map(|r| r.y_hat).collect();
    let overall = calibration_stats(&y, &f);
    let mut notes = vec![];
    if overall.calib_slope.is_none() {
        notes.push("predictions have zero variance: calibration slope undefined".to_string());
    }

    let mut subgroups = vec![];
    if let Some(groups) = groups {
        if groups.len() != lab.len() {
            return Err(IpdError::DimensionMismatch { expected: lab.len(), found: groups.len() });
        }
        let mut by_label: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (g, r) in groups.iter().zip(lab) {
            let e = by_label.entry(g.as_str()).or_default();
            e.0.push(r.y);
            e.1.push(r.y_hat);
        }
        for (label, (gy, gf)) in by_label {
            let small = gy.len() < MIN_SUBGROUP_ROWS;
            subgroups.push(SubgroupCalibration {
                label: label.to_string(),
                n: gy.len(),
                stats: (!small).then(|| calibration_stats(&gy, &gf)),
                flagged_small: small,
            });
        }
    }
    Ok(CalibrationReport { overall, subgroups, notes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignChange {
    Unchanged,
    /// Both fits exclude zero with opposite signs.
    Reversed,
    /// Excludes zero with the outcome, not with the prediction.
    Vanished,
    /// Excludes zero with the prediction, not with the outcome.
    Emerged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideBySideReport {
    pub theta_true_outcome: Vec<f64>,
    pub theta_predicted_outcome: Vec<f64>,
    pub se_true_outcome: Vec<f64>,
    pub se_predicted_outcome: Vec<f64>,
    /// `theta_predicted_outcome - theta_true_outcome`.
    pub deltas: Vec<f64>,
    pub sign_changes: Vec<SignChange>,
    /// Set when any coefficient changes sign.
    pub structural_distortion: bool,
}

fn significant_sign(theta: f64, se: f64, z: f64) -> i8 {
    if theta.abs() > z * se {
        if theta > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// Fits the target on the labeled rows twice, with `y` and with `y_hat`.
///
/// A coefficient's sign is taken as zero when its 95% interval covers zero,
/// so an association that disappears under the predictions counts as a sign
/// change.
pub fn side_by_side(d: &Dataset, t: &TargetSpec) -> Result<SideBySideReport> {
    let lab_only = Dataset::new(d.labeled().to_vec(), vec![], d.column_names().clone())?;
    let truth = estimators::estimate(&lab_only, t, &EstimatorConfig::new(Method::Classical))?;
    let pred = estimators::estimate(&lab_only, t, &EstimatorConfig::new(Method::Naive))?;
    let z = stats::normal_quantile(0.975);
    let deltas = pred.theta_hat.iter().zip(&truth.theta_hat).map(|(p, q)| p - q).collect();
    let sign_changes: Vec<SignChange> = (0..t.dim)
        .map(|j| {
            let a = significant_sign(truth.theta_hat[j], truth.std_errors[j], z);
            let b = significant_sign(pred.theta_hat[j], pred.std_errors[j], z);
            match (a, b) {
                (a, b) if a == b => SignChange::Unchanged,
                (0, _) => SignChange::Emerged,
                (_, 0) => SignChange::Vanished,
                _ => SignChange::Reversed,
            }
        })
        .collect();
    let structural_distortion = sign_changes.iter().any(|c| *c != SignChange::Unchanged);
    Ok(SideBySideReport {
        theta_true_outcome: truth.theta_hat,
        theta_predicted_outcome: pred.theta_hat,
        se_true_outcome: truth.std_errors,
        se_predicted_outcome: pred.std_errors,
        deltas,
        sign_changes,
        structural_distortion,
    })
}

/// Area under the ROC curve by the rank statistic with mid-ranks for ties.
/// `None` unless both classes are present.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * mid;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub category: String,
    pub n_labeled: usize,
    /// One-vs-rest agreement of predicted and observed membership.
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// Per-class accuracy and AUC on the labeled rows. Class scores default to
/// the hard predicted-membership indicator when the dataset carries none.
pub fn classification_metrics(cd: &CategoricalDataset) -> Result<Vec<ClassMetrics>> {
    let rows: Vec<usize> = (0..cd.len()).filter(|&i| cd.group()[i].is_some()).collect();
    if rows.len() < 2 {
        return Err(IpdError::InsufficientData { needed: 2, available: rows.len() });
    }
    let out = cd
        .categories()
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let truth: Vec<bool> = rows.iter().map(|&i| cd.group()[i] == Some(g)).collect();
            let hard: Vec<bool> = rows.iter().map(|&i| cd.group_hat()[i] == g).collect();
            let agree = truth.iter().zip(&hard).filter(|(a, b)| a == b).count();
            let scores: Vec<f64> = match cd.scores() {
                Some(s) => rows.iter().map(|&i| s[i][g]).collect(),
                None => hard.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect(),
            };
            ClassMetrics {
                category: name.clone(),
                n_labeled: rows.len(),
                accuracy: agree as f64 / rows.len() as f64,
                auc: auc(&scores, &truth),
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub feature: usize,
    /// Coefficient of the probe feature in the regression of `y_hat` on all
    /// features (its direct contribution).
    pub direct_slope: f64,
    /// Slope of the regression of `y_hat` on `(1, z_j)` alone.
    pub marginal_slope: f64,
    /// Covariance of the probe feature with the remainder of the prediction.
    pub leakage: f64,
    /// Cauchy-Schwarz bound `sd(z_j) * sd(remainder)`.
    pub bound: f64,
}

/// Splits the prediction into `a0 + a1 z_j + g` where `a1` is the direct
/// coefficient of feature `j` holding the other features fixed, and reports
/// `leakage = Cov(z_j, g)`. The marginal slope decomposes exactly as
/// `a1 + leakage / Var(z_j)`.
pub fn estimate_leakage(d: &Dataset, feature: usize) -> Result<LeakageReport> {
    let lab: &[LabeledRow] = d.labeled();
    let p_z = d.p_z();
    if feature >= p_z {
        return Err(IpdError::DimensionMismatch { expected: p_z, found: feature + 1 });
    }
    if lab.len() < p_z + 2 {
        return Err(IpdError::InsufficientData { needed: p_z + 2, available: lab.len() });
    }
    let zj: Vec<f64> = lab.iter().map(|r| r.z[feature]).collect();
    let var_j = stats::variance(&zj);
    if !(var_j > 0.0) {
        return Err(IpdError::Degenerate(format!("feature {feature} is constant on the labeled rows")));
    }
    let f: Vec<f64> = lab.iter().map(|r| r.y_hat).collect();

    let dim = p_z + 1;
    let mut xtx = Matrix::zeros(dim, dim);
    let mut xty = Vector::zeros(dim);
    for r in lab {
        let mut row = Vector::zeros(dim);
        row[0] = 1.0;
        for (k, v) in r.z.iter().enumerate() {
            row[k + 1] = *v;
        }
        xtx += &row * row.transpose();
        xty += &row * r.y_hat;
    }
    let coef = linalg::solve(&xtx, &xty)?;
    let (a0, a1) = (coef[0], coef[feature + 1]);
    let remainder: Vec<f64> = f.iter().zip(&zj).map(|(y, z)| y - a0 - a1 * z).collect();
    let leakage = stats::covariance(&zj, &remainder);
    let bound = libm::sqrt(var_j * stats::variance(&remainder));
    debug_assert!(leakage.abs() <= bound * (1.0 + 1e-9) + 1e-300);
    Ok(LeakageReport { feature, direct_slope: a1, marginal_slope: stats::covariance(&zj, &f) / var_j, leakage, bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    /// `E[eta_hat - theta]`, estimated by the Monte Carlo mean.
    pub total: f64,
    /// `eta - theta`: the shift of the estimand itself.
    pub estimator_bias: f64,
    /// `E[eta_hat - eta]`.
    pub estimation_bias: f64,
    /// Monte Carlo standard error of `total`.
    pub mc_se: f64,
}

/// Two-part bias decomposition of naive estimates `eta_hat` of a quantity
/// whose true value is `theta` and whose naive estimand is `eta`.
pub fn bias_decomposition_report(estimates: &[f64], theta: f64, eta: Option<f64>) -> Result<BiasDecomposition> {
    let eta = eta.ok_or_else(|| IpdError::Unavailable("naive estimand eta is not available".into()))?;
    if estimates.is_empty() {
        return Err(IpdError::InsufficientData { needed: 1, available: 0 });
    }
    // The total is formed as the sum so the identity holds in floating point.
    let estimation_bias = stats::mean(estimates) - eta;
    let estimator_bias = eta - theta;
    Ok(BiasDecomposition {
        total: estimation_bias + estimator_bias,
        estimator_bias,
        estimation_bias,
        mc_se: stats::std_dev(estimates) / libm::sqrt(estimates.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnNames;
    use approx::assert_abs_diff_eq;

    fn labeled(ys: &[f64], f: impl Fn(f64) -> f64) -> Dataset {
        let rows = ys.iter().map(|&y| LabeledRow { y, y_hat: f(y), x: vec![y * 0.5 + 1.0], z: vec![] }).collect();
        Dataset::new(rows, vec![], ColumnNames::default()).unwrap()
    }

    const YS: [f64; 6] = [1.0, 2.5, -0.5, 4.0, 3.0, 0.2];

    #[test]
    fn perfect_calibration() {
        let r = calibration_summary(&labeled(&YS, |y| y), None).unwrap();
        let s = r.overall;
        assert_eq!(s.mean_error, 0.0);
        assert_eq!(s.mse, 0.0);
        assert_abs_diff_eq!(s.calib_slope.unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.calib_intercept.unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.correlation.unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_and_attenuated_calibration() {
        let s = calibration_summary(&labeled(&YS, |y| y + 1.0), None).unwrap().overall;
        assert_abs_diff_eq!(s.mean_error, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.calib_slope.unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.calib_intercept.unwrap(), -1.0, epsilon = 1e-14);
        assert!(s.mse >= s.mean_error * s.mean_error);
        let s = calibration_summary(&labeled(&YS, |y| 0.8 * y), None).unwrap().overall;
        assert_abs_diff_eq!(s.calib_slope.unwrap(), 1.25, epsilon = 1e-13);
    }

    #[test]
    fn constant_prediction_has_no_slope() {
        let r = calibration_summary(&labeled(&YS, |_| 2.0), None).unwrap();
        assert_eq!(r.overall.calib_slope, None);
        assert_eq!(r.overall.correlation, None);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn small_subgroups_are_flagged() {
        let ys: Vec<f64> = (0..14).map(|i| i as f64).collect();
        let d = labeled(&ys, |y| y + 0.1);
        let groups: Vec<String> = (0..14).map(|i| if i < 11 { "a".into() } else { "b".into() }).collect();
        let r = calibration_summary(&d, Some(&groups)).unwrap();
        assert_eq!(r.subgroups.len(), 2);
        assert!(r.subgroups[0].stats.is_some());
        assert!(r.subgroups[1].flagged_small && r.subgroups[1].stats.is_none());
    }

    #[test]
    fn side_by_side_identical_and_doubled() {
        let t = TargetSpec::linear(1, true).unwrap();
        let r = side_by_side(&labeled(&YS, |y| y), &t).unwrap();
        assert!(r.deltas.iter().all(|d| d.abs() < 1e-12));
        assert!(!r.structural_distortion);

        let rows = YS
            .iter()
            .enumerate()
            .map(|(i, &y)| LabeledRow { y, y_hat: 2.0 * y, x: vec![i as f64 + y * y], z: vec![] })
            .collect();
        let d = Dataset::new(rows, vec![], ColumnNames::default()).unwrap();
        let t = TargetSpec::linear(1, false).unwrap();
        let r = side_by_side(&d, &t).unwrap();
        assert_abs_diff_eq!(r.theta_predicted_outcome[0], 2.0 * r.theta_true_outcome[0], epsilon = 1e-12);
    }

    #[test]
    fn auc_conventions() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(auc(&[0.5, 0.6], &[true, true]), None);
        let s = [0.3, 0.1, 0.7, 0.4, 0.9, 0.2];
        let lab = [false, false, true, true, false, true];
        let a = auc(&s, &lab).unwrap();
        let m: Vec<f64> = s.iter().map(|v| libm::exp(3.0 * v)).collect();
        assert_eq!(auc(&m, &lab).unwrap(), a);
    }

    #[test]
    fn classification_single_class_is_null() {
        let cd = CategoricalDataset::new(
            vec!["a".into(), "b".into()],
            vec![Some(0), Some(0), Some(0)],
            vec![0, 1, 0],
            vec![true, false, true],
        )
        .unwrap();
        let m = classification_metrics(&cd).unwrap();
        assert_abs_diff_eq!(m[0].accuracy, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m[0].auc, None);
    }

    #[test]
    fn leakage_of_exact_linear_rule_is_zero() {
        let rows: Vec<LabeledRow> = (0..30)
            .map(|i| {
                let z1 = libm::sin(i as f64);
                let z2 = libm::cos(1.7 * i as f64);
                LabeledRow { y: 0.0, y_hat: 0.3 + 2.0 * z1, x: vec![], z: vec![z1, z2] }
            })
            .collect();
        let d = Dataset::new(rows, vec![], ColumnNames::default()).unwrap();
        let r = estimate_leakage(&d, 0).unwrap();
        assert!(r.leakage.abs() < 1e-12);
        assert_abs_diff_eq!(r.direct_slope, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn leakage_constant_feature_is_degenerate() {
        let rows: Vec<LabeledRow> =
            (0..10).map(|i| LabeledRow { y: 0.0, y_hat: i as f64, x: vec![], z: vec![1.0, i as f64] }).collect();
        let d = Dataset::new(rows, vec![], ColumnNames::default()).unwrap();
        assert!(matches!(estimate_leakage(&d, 0), Err(IpdError::Degenerate(_))));
    }

    #[test]
    fn bias_decomposition_identity() {
        let est = [0.78, 0.81, 0.80, 0.83];
        let b = bias_decomposition_report(&est, 1.0, Some(0.8)).unwrap();
        assert_abs_diff_eq!(b.estimator_bias, -0.2, epsilon = 1e-15);
        assert_eq!(b.estimation_bias + b.estimator_bias, b.total);
        assert!(bias_decomposition_report(&est, 1.0, None).is_err());
    }
}
