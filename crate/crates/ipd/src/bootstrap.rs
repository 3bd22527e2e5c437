//! Nonparametric bootstrap of an estimator, resampling the labeled and
//! unlabeled subsets separately so each replicate keeps `n_l` and `n_u`.

use ipd_core::data::Dataset;
use ipd_core::estimators::{estimate, EstimatorConfig};
use ipd_core::seed;
use ipd_core::{stats, IpdError, TargetSpec};
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub std_errors: Vec<f64>,
    pub resamples: usize,
    pub failures: usize,
}

fn resample(d: &Dataset, b: usize, seed_value: u64) -> Result<Dataset, IpdError> {
    let mut rng = seed::rng_from_seed(seed::split_stream(seed_value, seed::STREAM_BOOTSTRAP, b as u64));
    let (n_l, n_u) = (d.n_labeled(), d.n_unlabeled());
    let lab = (0..n_l).map(|_| d.labeled()[rng.random_range(0..n_l)].clone()).collect();
    let picks: Vec<usize> = (0..n_u).map(|_| rng.random_range(0..n_u)).collect();
    let unl = picks.iter().map(|&i| d.unlabeled()[i].clone()).collect();
    let out = Dataset::new(lab, unl, d.column_names().clone())?;
    match d.unlabeled_truth() {
        Some(t) => out.with_unlabeled_truth(picks.iter().map(|&i| t[i]).collect()),
        None => Ok(out),
    }
}

/// Standard deviation of `resamples` bootstrap re-estimates. Replicate `b`
/// draws from its own seed, so the result does not depend on threading.
pub fn bootstrap_std_errors(
    d: &Dataset,
    t: &TargetSpec,
    cfg: &EstimatorConfig,
    resamples: usize,
    seed_value: u64,
) -> Result<BootstrapSummary, IpdError> {
    if resamples < 2 {
        return Err(IpdError::InvalidConfig("bootstrap needs at least two resamples".into()));
    }
    let fits: Vec<Option<Vec<f64>>> = (0..resamples)
        .into_par_iter()
        .map(|b| resample(d, b, seed_value).and_then(|db| estimate(&db, t, cfg)).ok().map(|r| r.theta_hat))
        .collect();
    let ok: Vec<&Vec<f64>> = fits.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(IpdError::Harness("fewer than two bootstrap fits succeeded".into()));
    }
    let std_errors = (0..t.dim)
        .map(|j| {
            let col: Vec<f64> = ok.iter().map(|th| th[j]).collect();
            stats::std_dev(&col)
        })
        .collect();
    Ok(BootstrapSummary { std_errors, resamples, failures: resamples - ok.len() })
}
