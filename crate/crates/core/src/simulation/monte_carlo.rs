use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dgp::{draw_linear, LinearDgpConfig, SimulatedSample};
use super::rule::{fit_rule, FrozenRule, PredictionRule};
use crate::data::{ColumnNames, Dataset, LabeledRow, UnlabeledRow};
use crate::error::{IpdError, Result};
use crate::estimators::{estimate, EstimatorConfig, Method};
use crate::seed;
use crate::stats;
use crate::targets::{TargetKind, TargetSpec};

/// Largest tolerated share of failed fits per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;

fn default_covariates() -> Vec<usize> {
    vec![0]
}

fn default_n_train() -> usize {
    1000
}

fn default_ci_level() -> f64 {
    0.95
}

fn default_clamp() -> bool {
    true
}

/// A coverage study. `dgp.n` is the analysis sample size; `dgp.seed` is
/// unused because every draw is derived from `master_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: usize,
    pub rho: f64,
    pub estimators: Vec<Method>,
    pub target: TargetSpec,
    /// Zero-based features used as regression covariates.
    #[serde(default = "default_covariates")]
    pub covariates: Vec<usize>,
    pub dgp: LinearDgpConfig,
    pub rule: PredictionRule,
    pub master_seed: u64,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default = "default_clamp")]
    pub clamp: bool,
}

impl McConfig {
    /// Slope of `Y` on `(1, Z_1)` under the standard model, n = 1000,
    /// rho = 0.5.
    pub fn slope_study(rule: PredictionRule, estimators: Vec<Method>, replications: usize, master_seed: u64) -> Self {
        McConfig {
            replications,
            rho: 0.5,
            estimators,
            target: TargetSpec { kind: TargetKind::LinearRegression, dim: 2, intercept: true },
            covariates: default_covariates(),
            dgp: LinearDgpConfig::standard(1000, 0),
            rule,
            master_seed,
            n_train: default_n_train(),
            ci_level: default_ci_level(),
            clamp: default_clamp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(IpdError::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(IpdError::InvalidConfig(format!("rho {} outside (0, 1)", self.rho)));
        }
        if self.estimators.is_empty() {
            return Err(IpdError::InvalidConfig("no estimators requested".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(IpdError::InvalidConfig(format!("ci level {} outside (0, 1)", self.ci_level)));
        }
        self.dgp.validate()?;
        self.rule.validate(self.dgp.p)?;
        if let Some(&j) = self.covariates.iter().find(|&&j| j >= self.dgp.p) {
            return Err(IpdError::InvalidConfig(format!("covariate {} but p = {}", j + 1, self.dgp.p)));
        }
        if self.target.kind != TargetKind::Mean && self.target.p_x() != self.covariates.len() {
            return Err(IpdError::DimensionMismatch { expected: self.target.p_x(), found: self.covariates.len() });
        }
        let n_l = self.n_labeled();
        if n_l == 0 || n_l == self.dgp.n {
            return Err(IpdError::InvalidConfig(format!(
                "rho = {} labels {n_l} of {} rows; need both sets nonempty",
                self.rho, self.dgp.n
            )));
        }
        Ok(())
    }

    pub fn n_labeled(&self) -> usize {
        libm::round(self.rho * self.dgp.n as f64) as usize
    }

    /// Population value of the target under the linear model with
    /// independent standard normal features.
    pub fn truth(&self) -> Result<Vec<f64>> {
        match self.target.kind {
            TargetKind::Mean => Ok(vec![0.0]),
            TargetKind::LinearRegression => {
                let mut t = Vec::with_capacity(self.target.dim);
                if self.target.intercept {
                    t.push(0.0);
                }
                t.extend(self.covariates.iter().map(|&j| self.dgp.true_beta[j]));
                Ok(t)
            }
            TargetKind::LogisticRegression => {
                Err(IpdError::Unsupported("no closed-form truth for a logistic target under the linear model".into()))
            }
        }
    }
}

/// Validated configuration with the rule already trained.
#[derive(Debug, Clone)]
pub struct McSetup {
    pub config: McConfig,
    pub rule: FrozenRule,
    pub truth: Vec<f64>,
}

impl McSetup {
    /// Trains the rule on a sample drawn from the training stream, which
    /// never overlaps the replication streams.
    pub fn new(config: McConfig) -> Result<Self> {
        config.validate()?;
        let truth = config.truth()?;
        let mut rng = seed::rng_from_seed(seed::split_stream(config.master_seed, seed::STREAM_TRAINING, 0));
        let train = draw_linear(&config.dgp, config.n_train, &mut rng);
        let forest_seed = seed::split_stream(config.master_seed, seed::STREAM_TRAINING, 1);
        let rule = fit_rule(&train, &config.rule, forest_seed)?;
        Ok(McSetup { config, rule, truth })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Residual variance of the fitted regression (naive, classical and
    /// oracle linear fits only).
    pub residual_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    /// One entry per configured estimator, in configuration order.
    pub outcomes: Vec<core::result::Result<EstimatorOutcome, String>>,
    /// Set when some labeled covariate mean sits more than four pooled
    /// standard errors from its unlabeled counterpart.
    pub mcar_imbalance: bool,
}

/// Indices of exactly `k` of `n` rows, uniformly at random.
pub fn mcar_labels<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut keep = vec![false; n];
    for &i in &idx[..k.min(n)] {
        keep[i] = true;
    }
    keep
}

/// Builds the analysis dataset: features in `covariates` become `x`, the
/// rule fills predictions, unlabeled truth is kept for the oracle.
pub fn analysis_dataset(
    sample: &SimulatedSample,
    labeled: &[bool],
    rule: &FrozenRule,
    covariates: &[usize],
) -> Result<Dataset> {
    let mut lab = Vec::new();
    let mut unl = Vec::new();
    let mut truth = Vec::new();
    for ((z, &y), &is_lab) in sample.z.iter().zip(&sample.y).zip(labeled) {
        let x: Vec<f64> = covariates.iter().map(|&j| z[j]).collect();
        let y_hat = rule.predict(z);
        if is_lab {
            lab.push(LabeledRow { y, y_hat, x, z: Vec::new() });
        } else {
            unl.push(UnlabeledRow { y_hat, x, z: Vec::new() });
            truth.push(y);
        }
    }
    let cov_names: Vec<String> = covariates.iter().map(|j| format!("z{}", j + 1)).collect();
    let cov_refs: Vec<&str> = cov_names.iter().map(String::as_str).collect();
    Dataset::new(lab, unl, ColumnNames::new("y", "y_hat", &cov_refs, &[]))?.with_unlabeled_truth(truth)
}

fn residual_variance(d: &Dataset, t: &TargetSpec, method: Method, theta: &[f64]) -> Option<f64> {
    if t.kind != TargetKind::LinearRegression {
        return None;
    }
    let fitted = |x: &[f64]| -> f64 {
        let row = t.design(x).unwrap_or_default();
        row.iter().zip(theta).map(|(a, b)| a * b).sum()
    };
    let mut ss = 0.0;
    let m = match method {
        Method::Naive => {
            for r in d.labeled() {
                ss += (r.y_hat - fitted(&r.x)).powi(2);
            }
            for r in d.unlabeled() {
                ss += (r.y_hat - fitted(&r.x)).powi(2);
            }
            d.n()
        }
        Method::Oracle => {
            for r in d.labeled() {
                ss += (r.y - fitted(&r.x)).powi(2);
            }
            for (r, y) in d.unlabeled().iter().zip(d.unlabeled_truth()?) {
                ss += (y - fitted(&r.x)).powi(2);
            }
            d.n()
        }
        Method::Classical => {
            for r in d.labeled() {
                ss += (r.y - fitted(&r.x)).powi(2);
            }
            d.n_labeled()
        }
        _ => return None,
    };
    (m > t.dim).then(|| ss / (m - t.dim) as f64)
}

fn mcar_imbalanced(d: &Dataset) -> bool {
    (0..d.p_x()).any(|j| {
        let l: Vec<f64> = d.labeled().iter().map(|r| r.x[j]).collect();
        let u: Vec<f64> = d.unlabeled().iter().map(|r| r.x[j]).collect();
        if l.len() < 2 || u.len() < 2 {
            return false;
        }
        let se = libm::sqrt(stats::variance(&l) / l.len() as f64 + stats::variance(&u) / u.len() as f64);
        (stats::mean(&l) - stats::mean(&u)).abs() > 4.0 * se
    })
}

/// Draws and fits replication `r`. Depends only on the setup and `r`.
pub fn replicate(setup: &McSetup, r: usize) -> ReplicationRecord {
    let cfg = &setup.config;
    let mut rng = seed::rng_from_seed(seed::split(cfg.master_seed, r as u64));
    let sample = draw_linear(&cfg.dgp, cfg.dgp.n, &mut rng);
    let labeled = mcar_labels(cfg.dgp.n, cfg.n_labeled(), &mut rng);
    let d = match analysis_dataset(&sample, &labeled, &setup.rule, &cfg.covariates) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return ReplicationRecord {
                index: r,
                outcomes: cfg.estimators.iter().map(|_| Err(msg.clone())).collect(),
                mcar_imbalance: false,
            };
        }
    };
    let outcomes = cfg
        .estimators
        .iter()
        .map(|&m| {
            let ec = EstimatorConfig::new(m).with_ci_level(cfg.ci_level).with_clamp(cfg.clamp);
            let res = estimate(&d, &cfg.target, &ec).map_err(|e| e.to_string())?;
            let residual_variance = residual_variance(&d, &cfg.target, m, &res.theta_hat);
            Ok(EstimatorOutcome {
                theta: res.theta_hat,
                std_errors: res.std_errors,
                ci_lower: res.ci_lower,
                ci_upper: res.ci_upper,
                residual_variance,
            })
        })
        .collect();
    ReplicationRecord { index: r, outcomes, mcar_imbalance: mcar_imbalanced(&d) }
}

/// Summary of one estimator for one coordinate of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub coordinate: usize,
    pub truth: f64,
    pub successes: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub mean_bias_mc_se: f64,
    pub empirical_se: f64,
    pub empirical_se_mc_se: f64,
    pub mean_estimated_se: f64,
    pub mean_estimated_se_mc_se: f64,
    pub coverage: f64,
    pub coverage_mc_se: f64,
    pub mean_ci_width: f64,
    pub mean_ci_width_mc_se: f64,
    pub median_ci_width: f64,
    pub mean_residual_variance: Option<f64>,
    pub mean_residual_variance_mc_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rule: String,
    pub target: String,
    pub replications: usize,
    pub n: usize,
    pub n_labeled: usize,
    pub ci_level: f64,
    pub master_seed: u64,
    /// Replications whose labeled set failed the covariate balance check.
    pub mcar_imbalanced: usize,
    pub rows: Vec<EstimatorSummary>,
}

impl McReport {
    pub fn row(&self, estimator: &str, coordinate: usize) -> Option<&EstimatorSummary> {
        self.rows.iter().find(|r| r.estimator == estimator && r.coordinate == coordinate)
    }
}

fn mean_and_mc_se(xs: &[f64]) -> (f64, f64) {
    let m = stats::mean(xs);
    let se = if xs.len() > 1 { stats::std_dev(xs) / libm::sqrt(xs.len() as f64) } else { f64::NAN };
    (m, se)
}

/// Aggregates records in replication order, so the result does not depend
/// on how the records were produced.
pub fn aggregate(setup: &McSetup, records: &[ReplicationRecord]) -> Result<McReport> {
    let cfg = &setup.config;
    let mut sorted: Vec<&ReplicationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let total = sorted.len();
    if total == 0 {
        return Err(IpdError::Harness("no replications to aggregate".into()));
    }
    let mut rows = Vec::new();
    for (k, method) in cfg.estimators.iter().enumerate() {
        let ok: Vec<&EstimatorOutcome> = sorted.iter().filter_map(|r| r.outcomes[k].as_ref().ok()).collect();
        let failures = total - ok.len();
        if failures as f64 > MAX_FAILURE_RATE * total as f64 {
            let first = sorted.iter().find_map(|r| r.outcomes[k].as_ref().err()).cloned().unwrap_or_default();
            return Err(IpdError::Harness(format!(
                "{}: {failures} of {total} replications failed (first error: {first})",
                method.name()
            )));
        }
        for (j, &truth) in setup.truth.iter().enumerate() {
            let est: Vec<f64> = ok.iter().map(|o| o.theta[j]).collect();
            let se: Vec<f64> = ok.iter().map(|o| o.std_errors[j]).collect();
            let width: Vec<f64> = ok.iter().map(|o| o.ci_upper[j] - o.ci_lower[j]).collect();
            let hits: Vec<f64> =
                ok.iter().map(|o| if o.ci_lower[j] <= truth && truth <= o.ci_upper[j] { 1.0 } else { 0.0 }).collect();
            let rv: Vec<f64> = ok.iter().filter_map(|o| o.residual_variance).collect();
            let m = ok.len() as f64;
            let (mean_estimate, bias_se) = mean_and_mc_se(&est);
            let emp = stats::std_dev(&est);
            let (mean_se, mean_se_se) = mean_and_mc_se(&se);
            let coverage = stats::mean(&hits);
            let (mean_width, width_se) = mean_and_mc_se(&width);
            let (rv_mean, rv_se) = if rv.len() == ok.len() && !rv.is_empty() {
                let (a, b) = mean_and_mc_se(&rv);
                (Some(a), Some(b))
            } else {
                (None, None)
            };
            rows.push(EstimatorSummary {
                estimator: method.name().to_string(),
                coordinate: j,
                truth,
                successes: ok.len(),
                failures,
                mean_estimate,
                mean_bias: mean_estimate - truth,
                mean_bias_mc_se: bias_se,
                empirical_se: emp,
                empirical_se_mc_se: emp / libm::sqrt(2.0 * (m - 1.0)),
                mean_estimated_se: mean_se,
                mean_estimated_se_mc_se: mean_se_se,
                coverage,
                coverage_mc_se: libm::sqrt(coverage * (1.0 - coverage) / m),
                mean_ci_width: mean_width,
                mean_ci_width_mc_se: width_se,
                median_ci_width: stats::median(&width),
                mean_residual_variance: rv_mean,
                mean_residual_variance_mc_se: rv_se,
            });
        }
    }
    Ok(McReport {
        rule: cfg.rule.to_string(),
        target: cfg.target.kind.to_string(),
        replications: total,
        n: cfg.dgp.n,
        n_labeled: cfg.n_labeled(),
        ci_level: cfg.ci_level,
        master_seed: cfg.master_seed,
        mcar_imbalanced: sorted.iter().filter(|r| r.mcar_imbalance).count(),
        rows,
    })
}

/// Runs every replication in order on the calling thread.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    let setup = McSetup::new(cfg.clone())?;
    let records: Vec<ReplicationRecord> = (0..cfg.replications).map(|r| replicate(&setup, r)).collect();
    aggregate(&setup, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::rule::PredictionRule;

    fn small(rule: PredictionRule, reps: usize) -> McConfig {
        let mut c = McConfig::slope_study(rule, vec![Method::Naive, Method::Oracle, Method::Ppi], reps, 42);
        c.dgp.n = 200;
        c
    }

    #[test]
    fn mcar_labels_exact_count() {
        let mut rng = seed::rng_from_seed(1);
        let keep = mcar_labels(101, 50, &mut rng);
        assert_eq!(keep.iter().filter(|&&b| b).count(), 50);
    }

    #[test]
    fn replications_are_reproducible_and_order_free() {
        let setup = McSetup::new(small(PredictionRule::attenuated(1.0, (0..10).collect()), 20)).unwrap();
        let fwd: Vec<_> = (0..20).map(|r| replicate(&setup, r)).collect();
        let rev: Vec<_> = (0..20).rev().map(|r| replicate(&setup, r)).collect();
        assert_eq!(aggregate(&setup, &fwd).unwrap(), aggregate(&setup, &rev).unwrap());
        assert_eq!(replicate(&setup, 3), fwd[3]);
    }

    #[test]
    fn report_shape_and_truth() {
        let rep = run_monte_carlo(&small(PredictionRule::attenuated(1.0, (1..10).collect()), 30)).unwrap();
        assert_eq!(rep.rows.len(), 6);
        let naive = rep.row("naive", 1).unwrap();
        assert_eq!(naive.truth, 1.0);
        assert!(naive.mean_estimate.abs() < 0.1);
        assert!(naive.coverage < 0.2);
        assert!(rep.row("ppi", 0).unwrap().mean_residual_variance.is_none());
        assert!(rep.row("oracle", 1).unwrap().mean_residual_variance.is_some());
        assert!((0.0..=1.0).contains(&rep.row("ppi", 1).unwrap().coverage));
    }

    #[test]
    fn invalid_configs() {
        let mut c = small(PredictionRule::attenuated(1.0, vec![0]), 10);
        c.rho = 1.0;
        assert!(run_monte_carlo(&c).is_err());
        let mut c = small(PredictionRule::attenuated(1.0, vec![0]), 10);
        c.covariates = vec![0, 1];
        assert!(run_monte_carlo(&c).is_err());
        let mut c = small(PredictionRule::attenuated(1.0, vec![0]), 10);
        c.target = TargetSpec { kind: TargetKind::LogisticRegression, dim: 2, intercept: true };
        assert!(matches!(run_monte_carlo(&c), Err(IpdError::Unsupported(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let c = small(PredictionRule::trees(vec![0, 1]), 5);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<McConfig>(&s).unwrap(), c);
    }
}
