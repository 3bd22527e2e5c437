//! Parallel Monte Carlo driver and report writers.

use std::io::Write;

use ipd_core::simulation::{aggregate, replicate, EstimatorSummary, McConfig, McReport, McSetup, ReplicationRecord};
use ipd_core::IpdError;
use rayon::prelude::*;

use crate::render;

fn pool(threads: usize) -> Result<rayon::ThreadPool, IpdError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| IpdError::Harness(format!("thread pool: {e}")))
}

/// Runs every replication on `threads` workers (0 picks the rayon
/// default). Replication seeds depend only on the index, and aggregation
/// runs in index order, so the report is the same for any thread count.
pub fn run_parallel(cfg: &McConfig, threads: usize) -> Result<McReport, IpdError> {
    let (setup, records) = replicate_parallel(cfg, threads)?;
    aggregate(&setup, &records)
}

/// The per-replication records behind [`run_parallel`], in index order.
pub fn replicate_parallel(cfg: &McConfig, threads: usize) -> Result<(McSetup, Vec<ReplicationRecord>), IpdError> {
    let setup = McSetup::new(cfg.clone())?;
    let records =
        pool(threads)?.install(|| (0..cfg.replications).into_par_iter().map(|r| replicate(&setup, r)).collect());
    Ok((setup, records))
}

pub const SUMMARY_COLUMNS: [&str; 20] = [
    "estimator",
    "coordinate",
    "truth",
    "successes",
    "failures",
    "mean_estimate",
    "mean_bias",
    "mean_bias_mc_se",
    "empirical_se",
    "empirical_se_mc_se",
    "mean_estimated_se",
    "mean_estimated_se_mc_se",
    "coverage",
    "coverage_mc_se",
    "mean_ci_width",
    "mean_ci_width_mc_se",
    "median_ci_width",
    "mean_residual_variance",
    "mean_residual_variance_mc_se",
    "mcar_imbalanced",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Cells of one summary row in [`SUMMARY_COLUMNS`] order, full precision.
pub fn summary_cells(s: &EstimatorSummary, mcar_imbalanced: usize) -> Vec<String> {
    vec![
        s.estimator.clone(),
        s.coordinate.to_string(),
        format!("{}", s.truth),
        s.successes.to_string(),
        s.failures.to_string(),
        format!("{}", s.mean_estimate),
        format!("{}", s.mean_bias),
        format!("{}", s.mean_bias_mc_se),
        format!("{}", s.empirical_se),
        format!("{}", s.empirical_se_mc_se),
        format!("{}", s.mean_estimated_se),
        format!("{}", s.mean_estimated_se_mc_se),
        format!("{}", s.coverage),
        format!("{}", s.coverage_mc_se),
        format!("{}", s.mean_ci_width),
        format!("{}", s.mean_ci_width_mc_se),
        format!("{}", s.median_ci_width),
        opt(s.mean_residual_variance),
        opt(s.mean_residual_variance_mc_se),
        mcar_imbalanced.to_string(),
    ]
}

/// One CSV row per estimator and coordinate.
pub fn write_report_csv<W: Write>(out: W, report: &McReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in &report.rows {
        w.write_record(summary_cells(s, report.mcar_imbalanced))?;
    }
    w.flush()?;
    Ok(())
}

/// Compact fixed-width table at four decimals.
pub fn report_text(report: &McReport) -> String {
    let headers = ["estimator", "coord", "truth", "mean", "bias", "emp SE", "est SE", "coverage", "CI width"];
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|s| {
            vec![
                s.estimator.clone(),
                s.coordinate.to_string(),
                render::f4(s.truth),
                render::f4(s.mean_estimate),
                render::f4(s.mean_bias),
                render::f4(s.empirical_se),
                render::f4(s.mean_estimated_se),
                render::f4(s.coverage),
                render::f4(s.mean_ci_width),
            ]
        })
        .collect();
    format!(
        "rule {}  target {}  R = {}  n = {}  n_l = {}\n{}",
        report.rule,
        report.target,
        report.replications,
        report.n,
        report.n_labeled,
        render::table(&headers, &rows)
    )
}
