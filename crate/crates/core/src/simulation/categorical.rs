use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::CategoricalDataset;
use crate::error::{IpdError, Result};
use crate::seed;

/// Groups drawn from `priors`, outcomes from `rates[group]`, predicted
/// groups from row `group` of `confusion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDgpConfig {
    pub categories: Vec<String>,
    pub priors: Vec<f64>,
    pub rates: Vec<f64>,
    pub confusion: Vec<Vec<f64>>,
    pub n: usize,
    pub seed: u64,
}

const SIMPLEX_TOL: f64 = 1e-9;

fn check_simplex(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(IpdError::Validation(format!("{what}: entries must lie in [0, 1]")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(IpdError::Validation(format!("{what}: entries sum to {s}, not 1")));
    }
    Ok(())
}

impl CategoricalDgpConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.categories.len();
        if k < 2 {
            return Err(IpdError::Validation("need at least two groups".into()));
        }
        if self.priors.len() != k || self.rates.len() != k || self.confusion.len() != k {
            return Err(IpdError::Validation(format!("priors, rates and confusion need {k} entries each")));
        }
        if self.n == 0 {
            return Err(IpdError::Validation("n must be >= 1".into()));
        }
        check_simplex("priors", &self.priors)?;
        if self.rates.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(IpdError::Validation("rates must lie in [0, 1]".into()));
        }
        for (g, row) in self.confusion.iter().enumerate() {
            if row.len() != k {
                return Err(IpdError::Validation(format!("confusion row {g} has {} entries, need {k}", row.len())));
            }
            check_simplex(&format!("confusion row {g}"), row)?;
        }
        Ok(())
    }

    /// Diagonal `accuracy`, remainder spread evenly over the other groups.
    pub fn uniform_confusion(k: usize, accuracy: f64) -> Vec<Vec<f64>> {
        let off = (1.0 - accuracy) / (k - 1) as f64;
        (0..k).map(|g| (0..k).map(|h| if g == h { accuracy } else { off }).collect()).collect()
    }

    /// Share of rows whose predicted group is correct, in expectation.
    pub fn expected_accuracy(&self) -> f64 {
        self.priors.iter().enumerate().map(|(g, p)| p * self.confusion[g][g]).sum()
    }
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the last partial sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Fully labeled sample; mask it with [`CategoricalDataset::masked`].
pub fn generate_categorical_dgp(cfg: &CategoricalDgpConfig) -> Result<CategoricalDataset> {
    cfg.validate()?;
    let mut rng = seed::rng_from_seed(cfg.seed);
    let mut group = Vec::with_capacity(cfg.n);
    let mut group_hat = Vec::with_capacity(cfg.n);
    let mut outcome = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let g = draw_index(&cfg.priors, &mut rng);
        let o = rng.random::<f64>() < cfg.rates[g];
        let h = draw_index(&cfg.confusion[g], &mut rng);
        group.push(Some(g));
        group_hat.push(h);
        outcome.push(o);
    }
    CategoricalDataset::new(cfg.categories.clone(), group, group_hat, outcome)
}
