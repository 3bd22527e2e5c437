//! Labeled / unlabeled dataset model.
//!
//! A study of `n` rows is split into a labeled part, where the outcome `y`
//! was measured, and an unlabeled part that only carries the prediction
//! `y_hat`. Every row carries inference covariates `x` and prediction
//! features `z`; the two column sets are stored independently even when
//! they overlap.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{IpdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub y: f64,
    pub y_hat: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledRow {
    pub y_hat: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// Column names of the roles in a dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColumnNames {
    pub outcome: String,
    pub prediction: String,
    pub covariates: Vec<String>,
    pub features: Vec<String>,
}

impl ColumnNames {
    pub fn new(outcome: &str, prediction: &str, covariates: &[&str], features: &[&str]) -> Self {
        ColumnNames {
            outcome: outcome.to_string(),
            prediction: prediction.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            features: features.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// An immutable, validated study sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    labeled: Vec<LabeledRow>,
    unlabeled: Vec<UnlabeledRow>,
    column_names: ColumnNames,
    /// True outcomes of the unlabeled rows. Only simulations know these;
    /// the oracle estimator requires them.
    unlabeled_truth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n: usize,
    pub n_l: usize,
    pub n_u: usize,
    pub rho: f64,
    pub p_x: usize,
    /// Set when there are no unlabeled rows; every prediction-powered method
    /// then reduces to the classical estimator.
    pub classical_only: bool,
}

impl Dataset {
    pub fn new(labeled: Vec<LabeledRow>, unlabeled: Vec<UnlabeledRow>, column_names: ColumnNames) -> Result<Self> {
        if labeled.is_empty() {
            return Err(IpdError::Validation("dataset has no labeled rows".into()));
        }
        let p_x = labeled[0].x.len();
        let p_z = labeled[0].z.len();
        for (i, r) in labeled.iter().enumerate() {
            if !r.y.is_finite() || !r.y_hat.is_finite() {
                return Err(IpdError::Validation(format!("labeled row {i}: outcome and prediction must be finite")));
            }
            check_widths("labeled", i, &r.x, &r.z, p_x, p_z)?;
        }
        for (i, r) in unlabeled.iter().enumerate() {
            if !r.y_hat.is_finite() {
                return Err(IpdError::Validation(format!("unlabeled row {i}: prediction must be finite")));
            }
            check_widths("unlabeled", i, &r.x, &r.z, p_x, p_z)?;
        }
        if !column_names.covariates.is_empty() && column_names.covariates.len() != p_x {
            return Err(IpdError::Validation(format!(
                "{} covariate names for {p_x} covariate columns",
                column_names.covariates.len()
            )));
        }
        Ok(Dataset { labeled, unlabeled, column_names, unlabeled_truth: None })
    }

    /// Attaches the hidden outcomes of the unlabeled rows (simulation only).
    pub fn with_unlabeled_truth(mut self, truth: Vec<f64>) -> Result<Self> {
        if truth.len() != self.unlabeled.len() {
            return Err(IpdError::DimensionMismatch { expected: self.unlabeled.len(), found: truth.len() });
        }
        self.unlabeled_truth = Some(truth);
        Ok(self)
    }

    pub fn labeled(&self) -> &[LabeledRow] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[UnlabeledRow] {
        &self.unlabeled
    }

    pub fn column_names(&self) -> &ColumnNames {
        &self.column_names
    }

    pub fn unlabeled_truth(&self) -> Option<&[f64]> {
        self.unlabeled_truth.as_deref()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn n(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn p_x(&self) -> usize {
        self.labeled[0].x.len()
    }

    pub fn p_z(&self) -> usize {
        self.labeled[0].z.len()
    }

    /// Constant labeling propensity `n_l / n` under MCAR.
    pub fn propensity(&self) -> f64 {
        self.n_labeled() as f64 / self.n() as f64
    }

    pub fn split_summary(&self) -> SplitSummary {
        let n_l = self.n_labeled();
        let n_u = self.n_unlabeled();
        SplitSummary {
            n: n_l + n_u,
            n_l,
            n_u,
            rho: n_l as f64 / (n_l + n_u) as f64,
            p_x: self.p_x(),
            classical_only: n_u == 0,
        }
    }

    /// Same rows with `y` and `y_hat` mapped through `f`; used by equivariance
    /// checks and by the group-rate pipeline.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        let labeled = self
            .labeled
            .iter()
            .map(|r| LabeledRow { y: f(r.y), y_hat: f(r.y_hat), x: r.x.clone(), z: r.z.clone() })
            .collect();
        let unlabeled =
            self.unlabeled.iter().map(|r| UnlabeledRow { y_hat: f(r.y_hat), x: r.x.clone(), z: r.z.clone() }).collect();
        let mut d = Dataset::new(labeled, unlabeled, self.column_names.clone())?;
        d.unlabeled_truth = self.unlabeled_truth.as_ref().map(|t| t.iter().map(|&v| f(v)).collect());
        Ok(d)
    }
}

pub fn split_summary(d: &Dataset) -> SplitSummary {
    d.split_summary()
}

fn check_widths(kind: &str, i: usize, x: &[f64], z: &[f64], p_x: usize, p_z: usize) -> Result<()> {
    if x.len() != p_x {
        return Err(IpdError::Validation(format!("{kind} row {i}: expected {p_x} covariates, found {}", x.len())));
    }
    if z.len() != p_z {
        return Err(IpdError::Validation(format!("{kind} row {i}: expected {p_z} features, found {}", z.len())));
    }
    if x.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(IpdError::Validation(format!("{kind} row {i}: non-finite covariate")));
    }
    Ok(())
}

/// Rows with a categorical group label that is observed only on the labeled
/// subset, a predicted label on every row, and a fully observed binary outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    categories: Vec<String>,
    group: Vec<Option<usize>>,
    group_hat: Vec<usize>,
    outcome: Vec<bool>,
    /// Optional per-row class scores (e.g. predicted probabilities) used for AUC.
    scores: Option<Vec<Vec<f64>>>,
}

impl CategoricalDataset {
    pub fn new(
        categories: Vec<String>,
        group: Vec<Option<usize>>,
        group_hat: Vec<usize>,
        outcome: Vec<bool>,
    ) -> Result<Self> {
        let k = categories.len();
        if k < 2 {
            return Err(IpdError::Validation("need at least two categories".into()));
        }
        let n = outcome.len();
        if group.len() != n || group_hat.len() != n {
            return Err(IpdError::DimensionMismatch { expected: n, found: group.len().min(group_hat.len()) });
        }
        if let Some(bad) = group_hat.iter().chain(group.iter().flatten()).find(|&&g| g >= k) {
            return Err(IpdError::Validation(format!("group index {bad} outside {k} categories")));
        }
        Ok(CategoricalDataset { categories, group, group_hat, outcome, scores: None })
    }

    pub fn with_scores(mut self, scores: Vec<Vec<f64>>) -> Result<Self> {
        if scores.len() != self.len() || scores.iter().any(|s| s.len() != self.categories.len()) {
            return Err(IpdError::Validation("scores must be n rows by one column per category".into()));
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn group(&self) -> &[Option<usize>] {
        &self.group
    }

    pub fn group_hat(&self) -> &[usize] {
        &self.group_hat
    }

    pub fn outcome(&self) -> &[bool] {
        &self.outcome
    }

    pub fn scores(&self) -> Option<&[Vec<f64>]> {
        self.scores.as_deref()
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn n_labeled(&self) -> usize {
        self.group.iter().filter(|g| g.is_some()).count()
    }

    /// Copy with the group label hidden on every row where `keep[i]` is false.
    pub fn masked(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(IpdError::DimensionMismatch { expected: self.len(), found: keep.len() });
        }
        let mut out = self.clone();
        for (g, &k) in out.group.iter_mut().zip(keep) {
            if !k {
                *g = None;
            }
        }
        Ok(out)
    }
}
