//! Per-group outcome rates from partially observed group labels via Bayes'
//! rule: `P(o=1 | g) = P(g | o=1) P(o=1) / P(g)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, ColumnNames, Dataset, LabeledRow, UnlabeledRow};
use crate::error::{IpdError, Result};
use crate::estimators::{fit, EstimatorConfig, Method};
use crate::linalg::{Matrix, Vector};
use crate::stats;
use crate::targets::{sigmoid, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredRate {
    pub rate: f64,
    pub raw: f64,
    pub clamped: bool,
}

pub fn recover_rate(p_g_given_o: f64, p_o: f64, p_g: f64) -> Result<RecoveredRate> {
    for (name, v) in [("p_group_given_outcome", p_g_given_o), ("p_outcome", p_o), ("p_group", p_g)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(IpdError::Validation(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if p_g == 0.0 {
        return Err(IpdError::Division("group probability is zero".into()));
    }
    let raw = p_g_given_o * p_o / p_g;
    let rate = raw.clamp(0.0, 1.0);
    Ok(RecoveredRate { rate, raw, clamped: rate != raw })
}

/// The three estimated Bayes inputs; `None` where a group could not be fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesInputs {
    pub p_group_given_outcome: Vec<Option<f64>>,
    pub p_outcome: f64,
    pub p_group: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub category: String,
    pub rate: Option<f64>,
    pub raw_rate: Option<f64>,
    pub clamped: bool,
    pub std_error: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub note: Option<String>,
}

impl GroupRate {
    fn missing(category: &str, note: String) -> Self {
        GroupRate {
            category: category.to_string(),
            rate: None,
            raw_rate: None,
            clamped: false,
            std_error: None,
            ci_lower: None,
            ci_upper: None,
            note: Some(note),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRateResult {
    pub method: String,
    pub ci_level: f64,
    pub groups: Vec<GroupRate>,
    pub inputs: BayesInputs,
}

/// One scalar fit with its per-row influence keyed by global row index.
struct Component {
    theta: f64,
    contrib: Vec<(usize, f64)>,
}

/// Row for a scalar fit: global index, observed label (if any), prediction.
type Row = (usize, Option<f64>, f64);

fn fit_component(rows: &[Row], target: &TargetSpec, cfg: &EstimatorConfig) -> Result<Component> {
    // Naive fits treat predictions as labels; the oracle needs every label.
    let (rows, method): (Vec<Row>, Method) = match cfg.method {
        Method::Naive => (rows.iter().map(|&(i, _, p)| (i, Some(p), p)).collect(), Method::Classical),
        Method::Oracle => {
            if rows.iter().any(|r| r.1.is_none()) {
                return Err(IpdError::Unavailable("oracle rates need every group label".into()));
            }
            (rows.to_vec(), Method::Classical)
        }
        m => (rows.to_vec(), m),
    };
    let mut lab_idx = Vec::new();
    let mut unl_idx = Vec::new();
    let mut lab = Vec::new();
    let mut unl = Vec::new();
    for &(i, y, y_hat) in &rows {
        match y {
            Some(y) => {
                lab_idx.push(i);
                lab.push(LabeledRow { y, y_hat, x: vec![], z: vec![] });
            }
            None => {
                unl_idx.push(i);
                unl.push(UnlabeledRow { y_hat, x: vec![], z: vec![] });
            }
        }
    }
    let d = Dataset::new(lab, unl, ColumnNames::default())?;
    let mut c = cfg.clone();
    c.method = method;
    let f = fit(&d, target, &c)?;
    let contrib = lab_idx
        .into_iter()
        .zip(&f.influence.labeled)
        .chain(unl_idx.into_iter().zip(&f.influence.unlabeled))
        .map(|(i, v)| (i, v[0]))
        .collect();
    Ok(Component { theta: f.result.theta_hat[0], contrib })
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Estimates every group's outcome rate with the estimator in `cfg`.
///
/// `P(g | o=1)` comes from an intercept-only one-vs-rest logistic fit on the
/// rows with `o = 1`; `P(o=1)` is the sample mean of the fully observed
/// outcome; `P(g)` is a mean fit with the predicted-group indicator as the
/// prediction. Standard errors use the delta method with the joint
/// influence of all three inputs.
pub fn estimate_group_rates(cd: &CategoricalDataset, cfg: &EstimatorConfig) -> Result<GroupRateResult> {
    let n = cd.len();
    if n < 2 {
        return Err(IpdError::InsufficientData { needed: 2, available: n });
    }
    let z = stats::normal_quantile(0.5 * (1.0 + cfg.ci_level));
    let logistic = TargetSpec::logistic(0, true)?;
    let mean = TargetSpec::mean();

    // The outcome is observed on every row, so every method reduces to the
    // full-sample mean.
    let outcome_rows: Vec<Row> =
        cd.outcome().iter().enumerate().map(|(i, &o)| (i, Some(indicator(o)), indicator(o))).collect();
    let mut outcome_cfg = cfg.clone();
    outcome_cfg.method = Method::Classical;
    let p_o = fit_component(&outcome_rows, &mean, &outcome_cfg)?;

    let mut groups = Vec::new();
    let mut p_g_o_all = Vec::new();
    let mut p_g_all = Vec::new();
    for (g, name) in cd.categories().iter().enumerate() {
        let present =
            if cfg.method == Method::Naive { cd.group_hat().contains(&g) } else { cd.group().contains(&Some(g)) };
        if !present {
            p_g_o_all.push(None);
            p_g_all.push(None);
            groups.push(GroupRate::missing(name, "no labeled rows in this group".into()));
            continue;
        }
        let label = |i: usize| cd.group()[i].map(|h| indicator(h == g));
        let pred = |i: usize| indicator(cd.group_hat()[i] == g);
        let sub: Vec<Row> = (0..n).filter(|&i| cd.outcome()[i]).map(|i| (i, label(i), pred(i))).collect();
        let all: Vec<Row> = (0..n).map(|i| (i, label(i), pred(i))).collect();
        let fits = if sub.is_empty() {
            Err(IpdError::InsufficientData { needed: 1, available: 0 })
        } else {
            fit_component(&sub, &logistic, cfg).and_then(|a| Ok((a, fit_component(&all, &mean, cfg)?)))
        };
        let (a, c) = match fits {
            Ok(v) => v,
            Err(e) => {
                p_g_o_all.push(None);
                p_g_all.push(None);
                groups.push(GroupRate::missing(name, e.to_string()));
                continue;
            }
        };
        let pa = sigmoid(a.theta);
        p_g_o_all.push(Some(pa));
        p_g_all.push(Some(c.theta));
        let rec = match recover_rate(pa, p_o.theta, c.theta) {
            Ok(r) => r,
            Err(e) => {
                groups.push(GroupRate::missing(name, e.to_string()));
                continue;
            }
        };

        let mut rows = vec![[0.0f64; 3]; n];
        for (k, comp) in [&a, &p_o, &c].into_iter().enumerate() {
            for &(i, v) in &comp.contrib {
                rows[i][k] += v;
            }
        }
        let mut cov = Matrix::zeros(3, 3);
        for r in &rows {
            let v = Vector::from_column_slice(r);
            cov += &v * v.transpose();
        }
        let (b, cg) = (p_o.theta, c.theta);
        let grad = Vector::from_column_slice(&[pa * (1.0 - pa) * b / cg, pa / cg, -pa * b / (cg * cg)]);
        let se = libm::sqrt((grad.transpose() * &cov * &grad)[(0, 0)].max(0.0));
        groups.push(GroupRate {
            category: name.clone(),
            rate: Some(rec.rate),
            raw_rate: Some(rec.raw),
            clamped: rec.clamped,
            std_error: Some(se),
            ci_lower: Some((rec.rate - z * se).max(0.0)),
            ci_upper: Some((rec.rate + z * se).min(1.0)),
            note: rec.clamped.then(|| format!("raw rate {:.4} clamped to [0, 1]", rec.raw)),
        });
    }
    Ok(GroupRateResult {
        method: cfg.method.name().to_string(),
        ci_level: cfg.ci_level,
        groups,
        inputs: BayesInputs { p_group_given_outcome: p_g_o_all, p_outcome: p_o.theta, p_group: p_g_all },
    })
}
