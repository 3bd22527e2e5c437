//! Naive, classical, oracle and prediction-powered estimators.
//!
//! The prediction-powered family solves the debiased estimating equation
//!
//! ```text
//! S(theta) = mean_L[ score(x, y) - M score(x, y_hat) ] + mean_U[ M score(x, y_hat) ] = 0
//! ```
//!
//! for a weighting matrix `M`. `M = 0` is the classical complete-case
//! estimator, `M = I` is PPI, `M = lambda I` with a tuned `lambda` is PPI++,
//! and a tuned diagonal `M` is PSPA. The covariance is the sandwich
//! `H^-1 [V_L / n_l + M V_U M^T / n_u] H^-1` with `H` the mean labeled
//! Hessian at the true outcomes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{IpdError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::stats;
use crate::targets::{self, Solution, SolverControls, TargetKind, TargetSpec, WeightedRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Classical,
    Oracle,
    Ppi,
    #[serde(rename = "ppi++", alias = "ppi_plus_plus")]
    PpiPlusPlus,
    Pspa,
    Unified,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Naive,
        Method::Classical,
        Method::Oracle,
        Method::Ppi,
        Method::PpiPlusPlus,
        Method::Pspa,
        Method::Unified,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Classical => "classical",
            Method::Oracle => "oracle",
            Method::Ppi => "ppi",
            Method::PpiPlusPlus => "ppi++",
            Method::Pspa => "pspa",
            Method::Unified => "unified",
        }
    }

    /// Whether the method uses the predictions of unlabeled rows.
    pub fn is_prediction_powered(&self) -> bool {
        matches!(self, Method::Ppi | Method::PpiPlusPlus | Method::Pspa | Method::Unified)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = IpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "classical" => Ok(Method::Classical),
            "oracle" => Ok(Method::Oracle),
            "ppi" => Ok(Method::Ppi),
            "ppi++" | "ppi_plus_plus" | "ppipp" => Ok(Method::PpiPlusPlus),
            "pspa" => Ok(Method::Pspa),
            "unified" => Ok(Method::Unified),
            other => Err(IpdError::InvalidConfig(format!(
                "unknown method '{other}' (valid: naive, classical, oracle, ppi, ppi++, pspa, unified)"
            ))),
        }
    }
}

/// The class of weighting matrices `M`. `None` values of the scaled-identity
/// and diagonal families are tuned from the labeled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightingFamily {
    Zero,
    Identity,
    ScaledIdentity { lambda: Option<f64> },
    Diagonal { omega: Option<Vec<f64>> },
    Fixed { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingSpec {
    #[serde(flatten)]
    pub family: WeightingFamily,
    /// Restrict tuned entries to [0, 1].
    pub clamp: bool,
}

impl WeightingSpec {
    pub fn new(family: WeightingFamily) -> Self {
        WeightingSpec { family, clamp: true }
    }

    /// The concrete matrix, or `None` when the family still needs tuning.
    pub fn matrix(&self, dim: usize) -> Result<Option<Matrix>> {
        Ok(match &self.family {
            WeightingFamily::Zero => Some(Matrix::zeros(dim, dim)),
            WeightingFamily::Identity => Some(Matrix::identity(dim, dim)),
            WeightingFamily::ScaledIdentity { lambda: Some(l) } => Some(Matrix::identity(dim, dim) * *l),
            WeightingFamily::Diagonal { omega: Some(w) } => {
                if w.len() != dim {
                    return Err(IpdError::DimensionMismatch { expected: dim, found: w.len() });
                }
                Some(Matrix::from_diagonal(&Vector::from_column_slice(w)))
            }
            WeightingFamily::Fixed { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(IpdError::InvalidConfig(format!("fixed weighting must be {dim}x{dim}")));
                }
                Some(Matrix::from_fn(dim, dim, |i, j| matrix[i][j]))
            }
            WeightingFamily::ScaledIdentity { lambda: None } | WeightingFamily::Diagonal { omega: None } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub weighting: WeightingSpec,
    pub ci_level: f64,
    pub solver: SolverControls,
}

impl EstimatorConfig {
    /// Defaults for `method`: tuned weights for PPI++ and PSPA, identity for
    /// PPI and the unified estimator, 95% intervals.
    pub fn new(method: Method) -> Self {
        let family = match method {
            Method::PpiPlusPlus => WeightingFamily::ScaledIdentity { lambda: None },
            Method::Pspa => WeightingFamily::Diagonal { omega: None },
            Method::Classical | Method::Naive | Method::Oracle => WeightingFamily::Zero,
            Method::Ppi | Method::Unified => WeightingFamily::Identity,
        };
        EstimatorConfig {
            method,
            weighting: WeightingSpec::new(family),
            ci_level: 0.95,
            solver: SolverControls::default(),
        }
    }

    pub fn with_weighting(mut self, family: WeightingFamily) -> Self {
        self.weighting.family = family;
        self
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.weighting.clamp = clamp;
        self
    }

    pub fn with_ci_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    Lambda(f64),
    Omega(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator_name: String,
    pub theta_hat: Vec<f64>,
    /// Row-major covariance matrix.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub ci_level: f64,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// True when some interval has zero width.
    pub ci_degenerate: bool,
    pub tuning: Option<Tuning>,
    pub converged: bool,
    pub iterations: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub notices: Vec<String>,
}

impl EstimateResult {
    fn from_parts(name: &str, solution: Solution, covariance: &Matrix, ci_level: f64, d: &Dataset) -> Result<Self> {
        let dim = solution.theta.len();
        let cov = linalg::symmetrize(covariance);
        let std_errors = (0..dim).map(|j| libm::sqrt(cov[(j, j)].max(0.0))).collect();
        let r = EstimateResult {
            estimator_name: name.to_string(),
            theta_hat: solution.theta,
            covariance: linalg::to_rows(&cov),
            std_errors,
            ci_level,
            ci_lower: vec![],
            ci_upper: vec![],
            ci_degenerate: false,
            tuning: None,
            converged: true,
            iterations: solution.iterations,
            n_labeled: d.n_labeled(),
            n_unlabeled: d.n_unlabeled(),
            notices: vec![],
        };
        confidence_interval(r, ci_level)
    }

    pub fn covariance_matrix(&self) -> Matrix {
        let dim = self.theta_hat.len();
        Matrix::from_fn(dim, dim, |i, j| self.covariance[i][j])
    }

    pub fn ci_width(&self, j: usize) -> f64 {
        self.ci_upper[j] - self.ci_lower[j]
    }

    pub fn covers(&self, j: usize, value: f64) -> bool {
        self.ci_lower[j] <= value && value <= self.ci_upper[j]
    }
}

/// Normal-quantile intervals `theta_j +- z_{(1+level)/2} * se_j`.
pub fn confidence_interval(mut r: EstimateResult, level: f64) -> Result<EstimateResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(IpdError::InvalidConfig(format!("ci level {level} outside (0, 1)")));
    }
    let z = stats::normal_quantile(0.5 * (1.0 + level));
    r.ci_level = level;
    r.ci_lower = r.theta_hat.iter().zip(&r.std_errors).map(|(t, s)| t - z * s).collect();
    r.ci_upper = r.theta_hat.iter().zip(&r.std_errors).map(|(t, s)| t + z * s).collect();
    r.ci_degenerate = r.ci_lower.iter().zip(&r.ci_upper).any(|(l, u)| !(l < u));
    Ok(r)
}

/// Per-row linearisation of an estimator: `sum_i c_i c_i^T` over both parts
/// reproduces its sandwich covariance, and summing products of two
/// estimators' contributions over shared rows gives their cross-covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Influence {
    pub labeled: Vec<Vec<f64>>,
    pub unlabeled: Vec<Vec<f64>>,
}

impl Influence {
    pub fn covariance(&self) -> Matrix {
        let dim = self.labeled.first().map_or(0, |c| c.len());
        let mut out = Matrix::zeros(dim, dim);
        for c in self.labeled.iter().chain(&self.unlabeled) {
            let v = Vector::from_column_slice(c);
            out += &v * v.transpose();
        }
        out
    }
}

/// Design rows and outcomes extracted once per estimator call.
struct Prepared {
    target: TargetSpec,
    lab_x: Vec<Vec<f64>>,
    lab_y: Vec<f64>,
    lab_yhat: Vec<f64>,
    unl_x: Vec<Vec<f64>>,
    unl_yhat: Vec<f64>,
}

impl Prepared {
    fn new(d: &Dataset, t: &TargetSpec) -> Result<Self> {
        if t.kind != TargetKind::Mean && d.p_x() != t.p_x() {
            return Err(IpdError::DimensionMismatch { expected: t.p_x(), found: d.p_x() });
        }
        let lab_x = d.labeled().iter().map(|r| t.design(&r.x)).collect::<Result<Vec<_>>>()?;
        let unl_x = d.unlabeled().iter().map(|r| t.design(&r.x)).collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            target: *t,
            lab_x,
            lab_y: d.labeled().iter().map(|r| r.y).collect(),
            lab_yhat: d.labeled().iter().map(|r| r.y_hat).collect(),
            unl_x,
            unl_yhat: d.unlabeled().iter().map(|r| r.y_hat).collect(),
        })
    }

    fn n_l(&self) -> usize {
        self.lab_y.len()
    }

    fn n_u(&self) -> usize {
        self.unl_yhat.len()
    }

    fn dim(&self) -> usize {
        self.target.dim
    }

    fn score(&self, theta: &[f64], x: &[f64], y: f64) -> Vector {
        Vector::from_vec(targets::score_unchecked(&self.target, theta, x, y))
    }

    fn mean_labeled_hessian(&self, theta: &[f64]) -> Matrix {
        let mut h = Matrix::zeros(self.dim(), self.dim());
        let w = 1.0 / self.n_l() as f64;
        for (x, &y) in self.lab_x.iter().zip(&self.lab_y) {
            targets::add_hessian(&self.target, theta, x, y, w, &mut h);
        }
        h
    }

    /// `S(theta)` and its Jacobian. A zero `m` skips every prediction term.
    fn unified_system(&self, theta: &[f64], m: &Matrix) -> (Vector, Matrix) {
        let dim = self.dim();
        let use_pred = m.iter().any(|v| *v != 0.0);
        let inv_l = 1.0 / self.n_l() as f64;
        let mut s = Vector::zeros(dim);
        let mut jac = Matrix::zeros(dim, dim);
        for (x, &y) in self.lab_x.iter().zip(&self.lab_y) {
            s += self.score(theta, x, y) * inv_l;
            targets::add_hessian(&self.target, theta, x, y, inv_l, &mut jac);
        }
        if use_pred {
            let mut g_pred = Vector::zeros(dim);
            let mut h_pred = Matrix::zeros(dim, dim);
            for (x, &yh) in self.lab_x.iter().zip(&self.lab_yhat) {
                g_pred -= self.score(theta, x, yh) * inv_l;
                targets::add_hessian(&self.target, theta, x, yh, -inv_l, &mut h_pred);
            }
            if self.n_u() > 0 {
                let inv_u = 1.0 / self.n_u() as f64;
                for (x, &yh) in self.unl_x.iter().zip(&self.unl_yhat) {
                    g_pred += self.score(theta, x, yh) * inv_u;
                    targets::add_hessian(&self.target, theta, x, yh, inv_u, &mut h_pred);
                }
            }
            s += m * g_pred;
            jac += m * h_pred;
        }
        (s, jac)
    }

    fn solve_unified(&self, m: &Matrix, controls: &SolverControls) -> Result<Solution> {
        if self.target.kind != TargetKind::Mean && self.n_l() < self.dim() {
            return Err(IpdError::InsufficientData { needed: self.dim(), available: self.n_l() });
        }
        let init = vec![0.0; self.dim()];
        targets::newton(|theta| Ok(self.unified_system(theta, m)), &init, controls)
    }

    /// Labeled-row gradients at `theta` for the true and predicted outcomes.
    fn labeled_scores(&self, theta: &[f64]) -> (Vec<Vector>, Vec<Vector>) {
        let on_y = self.lab_x.iter().zip(&self.lab_y).map(|(x, &y)| self.score(theta, x, y)).collect();
        let on_f = self.lab_x.iter().zip(&self.lab_yhat).map(|(x, &y)| self.score(theta, x, y)).collect();
        (on_y, on_f)
    }

    fn unlabeled_scores(&self, theta: &[f64]) -> Vec<Vector> {
        self.unl_x.iter().zip(&self.unl_yhat).map(|(x, &y)| self.score(theta, x, y)).collect()
    }
}

fn is_zero(m: &Matrix) -> bool {
    m.iter().all(|v| *v == 0.0)
}

/// The unified estimating function `S(theta)` for a fixed weighting `m`.
pub fn unified_score(d: &Dataset, t: &TargetSpec, theta: &[f64], m: &Matrix) -> Result<Vec<f64>> {
    let p = Prepared::new(d, t)?;
    if theta.len() != p.dim() {
        return Err(IpdError::DimensionMismatch { expected: p.dim(), found: theta.len() });
    }
    Ok(p.unified_system(theta, m).0.as_slice().to_vec())
}

/// Left side of the augmented inverse-probability-weighted estimating
/// equation with constant propensity `pi = n_l / n`, score `U = grad l(x, y)`
/// and augmentation `psi = grad l(x, y_hat)`:
///
/// ```text
/// sum_i { D_i / pi * U_i - (D_i - pi) / pi * psi_i }
/// ```
///
/// Divided by `n` it equals [`unified_score`] with `M = (n_u / n) I`, i.e. the
/// PPI rectifier whose prediction average runs over all `n` rows.
pub fn aipw_score(d: &Dataset, t: &TargetSpec, theta: &[f64]) -> Result<Vec<f64>> {
    let p = Prepared::new(d, t)?;
    if theta.len() != p.dim() {
        return Err(IpdError::DimensionMismatch { expected: p.dim(), found: theta.len() });
    }
    let pi = d.propensity();
    let mut total = Vector::zeros(p.dim());
    let (on_y, on_f) = p.labeled_scores(theta);
    for (u, psi) in on_y.iter().zip(&on_f) {
        total += u / pi - psi * ((1.0 - pi) / pi);
    }
    for psi in p.unlabeled_scores(theta) {
        total += psi;
    }
    Ok(total.as_slice().to_vec())
}

/// Sandwich covariance of the unified estimator at `theta_hat` for weighting `m`.
pub fn sandwich_covariance(d: &Dataset, t: &TargetSpec, theta_hat: &[f64], m: &Matrix) -> Result<Matrix> {
    let p = Prepared::new(d, t)?;
    unified_covariance(&p, theta_hat, m)
}

fn unified_covariance(p: &Prepared, theta: &[f64], m: &Matrix) -> Result<Matrix> {
    let (h_inv, lab, unl) = unified_parts(p, theta, m)?;
    let dim = p.dim();
    let n_l = p.n_l() as f64;
    let mut meat = linalg::covariance_of(&lab, dim) / n_l;
    if !unl.is_empty() {
        let n_u = p.n_u() as f64;
        meat += m * linalg::covariance_of(&unl, dim) * m.transpose() / n_u;
    }
    Ok(linalg::symmetrize(&(&h_inv * meat * &h_inv)))
}

/// Bread inverse plus the labeled rectified scores and the unlabeled
/// prediction scores (the latter empty when `m` is zero).
fn unified_parts(p: &Prepared, theta: &[f64], m: &Matrix) -> Result<(Matrix, Vec<Vector>, Vec<Vector>)> {
    let h_inv = linalg::sym_inverse(&p.mean_labeled_hessian(theta))?;
    let (on_y, on_f) = p.labeled_scores(theta);
    let zero = is_zero(m);
    let lab = if zero { on_y } else { on_y.into_iter().zip(on_f).map(|(a, b)| a - m * b).collect() };
    let unl = if zero || p.n_u() == 0 { vec![] } else { p.unlabeled_scores(theta) };
    Ok((h_inv, lab, unl))
}

fn centred_contributions(rows: &[Vector], transform: &Matrix) -> Vec<Vec<f64>> {
    let n = rows.len();
    if n < 2 {
        return rows.iter().map(|r| vec![0.0; r.len()]).collect();
    }
    let mut mean = Vector::zeros(transform.ncols());
    for r in rows {
        mean += r;
    }
    mean /= n as f64;
    let scale = 1.0 / libm::sqrt((n * (n - 1)) as f64);
    rows.iter().map(|r| (-(transform * (r - &mean)) * scale).as_slice().to_vec()).collect()
}

fn unified_influence(p: &Prepared, theta: &[f64], m: &Matrix) -> Result<Influence> {
    let (h_inv, lab, unl) = unified_parts(p, theta, m)?;
    let labeled = centred_contributions(&lab, &h_inv);
    let unlabeled =
        if unl.is_empty() { vec![vec![0.0; p.dim()]; p.n_u()] } else { centred_contributions(&unl, &(&h_inv * m)) };
    Ok(Influence { labeled, unlabeled })
}

/// A fit over every row with a single outcome per row (naive or oracle).
fn full_sample_fit(
    p: &Prepared,
    lab_y: &[f64],
    unl_y: &[f64],
    controls: &SolverControls,
) -> Result<(Solution, Matrix, Influence)> {
    let t = &p.target;
    let rows: Vec<WeightedRow<'_>> = p
        .lab_x
        .iter()
        .zip(lab_y)
        .chain(p.unl_x.iter().zip(unl_y))
        .map(|(x, &y)| WeightedRow { x, y, weight: 1.0 })
        .collect();
    let sol = targets::solve_weighted(t, &rows, controls, &vec![0.0; t.dim])?;
    let theta = &sol.theta;
    let n = rows.len() as f64;
    let mut h = Matrix::zeros(t.dim, t.dim);
    for r in &rows {
        targets::add_hessian(t, theta, r.x, r.y, 1.0 / n, &mut h);
    }
    let h_inv = linalg::sym_inverse(&h)?;
    let scores: Vec<Vector> = rows.iter().map(|r| p.score(theta, r.x, r.y)).collect();
    let cov = linalg::symmetrize(&(&h_inv * linalg::covariance_of(&scores, t.dim) * &h_inv / n));
    let mut contrib = centred_contributions(&scores, &h_inv);
    let unlabeled = contrib.split_off(p.n_l());
    Ok((sol, cov, Influence { labeled: contrib, unlabeled }))
}

/// Outcome of a tuning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

/// `A = H^-1 (C + C^T) H^-1` and `B = H^-1 V_f H^-1` on the labeled rows at
/// the pilot estimate, plus the ratio `n_l / n_u`.
fn tuning_moments(p: &Prepared, theta_pilot: &[f64]) -> Result<(Matrix, Matrix, f64)> {
    if p.n_l() < 2 || p.n_u() < 1 {
        return Err(IpdError::InsufficientData { needed: 2, available: p.n_l().min(p.n_u() * 2) });
    }
    if theta_pilot.len() != p.dim() {
        return Err(IpdError::DimensionMismatch { expected: p.dim(), found: theta_pilot.len() });
    }
    let dim = p.dim();
    let h_inv = linalg::sym_inverse(&p.mean_labeled_hessian(theta_pilot))?;
    let (on_y, on_f) = p.labeled_scores(theta_pilot);
    let n = on_y.len();
    let mean_y = on_y.iter().fold(Vector::zeros(dim), |a, v| a + v) / n as f64;
    let mean_f = on_f.iter().fold(Vector::zeros(dim), |a, v| a + v) / n as f64;
    let mut cross = Matrix::zeros(dim, dim);
    for (a, b) in on_y.iter().zip(&on_f) {
        cross += (a - &mean_y) * (b - &mean_f).transpose();
    }
    cross /= (n - 1) as f64;
    let v_f = linalg::covariance_of(&on_f, dim);
    let a = &h_inv * (&cross + cross.transpose()) * &h_inv;
    let b = &h_inv * v_f * &h_inv;
    Ok((a, b, p.n_l() as f64 / p.n_u() as f64))
}

fn finish_weight(raw: f64, denom: f64, clamp: bool, what: &str, warnings: &mut Vec<String>) -> f64 {
    if !(denom > 0.0) {
        warnings.push(format!("{what}: prediction score variance is zero; weight set to 0"));
        return 0.0;
    }
    let v = raw / denom;
    if clamp {
        v.clamp(0.0, 1.0)
    } else {
        v
    }
}

/// Power-tuning weight for `M = lambda I` minimising the trace of the
/// asymptotic covariance.
pub fn tune_lambda(d: &Dataset, t: &TargetSpec, theta_pilot: &[f64], clamp: bool) -> Result<Tuned<f64>> {
    let p = Prepared::new(d, t)?;
    tune_lambda_prepared(&p, theta_pilot, clamp)
}

fn tune_lambda_prepared(p: &Prepared, theta_pilot: &[f64], clamp: bool) -> Result<Tuned<f64>> {
    let (a, b, ratio) = tuning_moments(p, theta_pilot)?;
    let mut warnings = vec![];
    let value = finish_weight(a.trace(), 2.0 * (1.0 + ratio) * b.trace(), clamp, "lambda", &mut warnings);
    Ok(Tuned { value, warnings })
}

/// Per-coordinate weights for `M = diag(omega)`; each coordinate minimises
/// its own asymptotic variance. The diagonal acts on the raw score.
pub fn tune_omega(d: &Dataset, t: &TargetSpec, theta_pilot: &[f64], clamp: bool) -> Result<Tuned<Vec<f64>>> {
    let p = Prepared::new(d, t)?;
    tune_omega_prepared(&p, theta_pilot, clamp)
}

fn tune_omega_prepared(p: &Prepared, theta_pilot: &[f64], clamp: bool) -> Result<Tuned<Vec<f64>>> {
    let (a, b, ratio) = tuning_moments(p, theta_pilot)?;
    let mut warnings = vec![];
    let value = (0..p.dim())
        .map(|j| {
            let what = format!("omega[{j}]");
            finish_weight(a[(j, j)], 2.0 * (1.0 + ratio) * b[(j, j)], clamp, &what, &mut warnings)
        })
        .collect();
    Ok(Tuned { value, warnings })
}

/// An estimate together with its weighting matrix and linearisation.
#[derive(Debug, Clone)]
pub struct Fit {
    pub result: EstimateResult,
    /// Weighting matrix used (zero for naive, classical and oracle).
    pub weighting: Matrix,
    pub influence: Influence,
}

fn unified_fit(p: &Prepared, d: &Dataset, name: &str, m: Matrix, cfg: &EstimatorConfig) -> Result<Fit> {
    if p.n_u() == 0 && !is_zero(&m) {
        return Err(IpdError::InvalidConfig("no unlabeled rows: only M = 0 is admissible".into()));
    }
    let sol = p.solve_unified(&m, &cfg.solver)?;
    let cov = unified_covariance(p, &sol.theta, &m)?;
    let influence = unified_influence(p, &sol.theta, &m)?;
    let result = EstimateResult::from_parts(name, sol, &cov, cfg.ci_level, d)?;
    Ok(Fit { result, weighting: m, influence })
}

/// Runs the estimator named in `cfg` and returns the fit with its
/// linearisation.
pub fn fit(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<Fit> {
    let p = Prepared::new(d, t)?;
    let dim = p.dim();
    let zero = Matrix::zeros(dim, dim);
    match cfg.method {
        Method::Naive | Method::Oracle => {
            let unl_y: Vec<f64> = if cfg.method == Method::Naive {
                p.unl_yhat.clone()
            } else {
                d.unlabeled_truth()
                    .ok_or_else(|| IpdError::Unavailable("oracle requires true outcomes on every row".into()))?
                    .to_vec()
            };
            let lab_y = if cfg.method == Method::Naive { &p.lab_yhat } else { &p.lab_y };
            if t.kind != TargetKind::Mean && d.n() < dim {
                return Err(IpdError::InsufficientData { needed: dim, available: d.n() });
            }
            let (sol, cov, influence) = full_sample_fit(&p, lab_y, &unl_y, &cfg.solver)?;
            let result = EstimateResult::from_parts(cfg.method.name(), sol, &cov, cfg.ci_level, d)?;
            Ok(Fit { result, weighting: zero, influence })
        }
        Method::Classical => unified_fit(&p, d, "classical", zero, cfg),
        Method::Unified => {
            let m = cfg
                .weighting
                .matrix(dim)?
                .ok_or_else(|| IpdError::InvalidConfig("unified estimator needs a fixed weighting matrix".into()))?;
            unified_fit(&p, d, "unified", m, cfg)
        }
        Method::Ppi | Method::PpiPlusPlus | Method::Pspa => {
            if p.n_u() == 0 {
                let mut f = unified_fit(&p, d, cfg.method.name(), zero, cfg)?;
                f.result.notices.push("no unlabeled rows: returned the classical estimate".to_string());
                return Ok(f);
            }
            let (m, tuning, warnings) = prediction_weighting(&p, cfg)?;
            let mut f = unified_fit(&p, d, cfg.method.name(), m, cfg)?;
            f.result.tuning = tuning;
            f.result.notices.extend(warnings);
            Ok(f)
        }
    }
}

fn prediction_weighting(p: &Prepared, cfg: &EstimatorConfig) -> Result<(Matrix, Option<Tuning>, Vec<String>)> {
    let dim = p.dim();
    let clamp = cfg.weighting.clamp;
    match cfg.method {
        Method::Ppi => Ok((Matrix::identity(dim, dim), None, vec![])),
        Method::PpiPlusPlus => {
            let (lambda, warnings) = match cfg.weighting.family {
                WeightingFamily::ScaledIdentity { lambda: Some(l) } => (l, vec![]),
                WeightingFamily::ScaledIdentity { lambda: None } => {
                    let pilot = p.solve_unified(&Matrix::zeros(dim, dim), &cfg.solver)?;
                    let tuned = tune_lambda_prepared(p, &pilot.theta, clamp)?;
                    (tuned.value, tuned.warnings)
                }
                _ => return Err(IpdError::InvalidConfig("ppi++ uses the scaled_identity weighting family".into())),
            };
            Ok((Matrix::identity(dim, dim) * lambda, Some(Tuning::Lambda(lambda)), warnings))
        }
        Method::Pspa => {
            let (omega, warnings) = match &cfg.weighting.family {
                WeightingFamily::Diagonal { omega: Some(w) } => {
                    if w.len() != dim {
                        return Err(IpdError::DimensionMismatch { expected: dim, found: w.len() });
                    }
                    (w.clone(), vec![])
                }
                WeightingFamily::Diagonal { omega: None } => {
                    let pilot = p.solve_unified(&Matrix::zeros(dim, dim), &cfg.solver)?;
                    let tuned = tune_omega_prepared(p, &pilot.theta, clamp)?;
                    (tuned.value, tuned.warnings)
                }
                _ => return Err(IpdError::InvalidConfig("pspa uses the diagonal weighting family".into())),
            };
            let m = Matrix::from_diagonal(&Vector::from_column_slice(&omega));
            Ok((m, Some(Tuning::Omega(omega)), warnings))
        }
        _ => unreachable!("not a prediction-powered method"),
    }
}

/// Dispatches on `cfg.method`.
pub fn estimate(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    fit(d, t, cfg).map(|f| f.result)
}

fn with_method(cfg: &EstimatorConfig, method: Method) -> EstimatorConfig {
    let mut c = cfg.clone();
    c.method = method;
    c
}

/// Treats every prediction as an observed outcome.
pub fn estimate_naive(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    estimate(d, t, &with_method(cfg, Method::Naive))
}

/// Complete-case fit on the labeled rows.
pub fn estimate_classical(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    estimate(d, t, &with_method(cfg, Method::Classical))
}

/// Fit on the true outcomes of every row; simulation only.
pub fn estimate_oracle(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    estimate(d, t, &with_method(cfg, Method::Oracle))
}

/// Debiased estimator for the fixed weighting in `cfg.weighting`.
pub fn estimate_unified(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    estimate(d, t, &with_method(cfg, Method::Unified))
}

pub fn estimate_ppi(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    estimate(d, t, &with_method(cfg, Method::Ppi))
}

/// PPI++; a `ScaledIdentity { lambda: Some(..) }` weighting forces the weight.
pub fn estimate_ppi_pp(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let mut c = with_method(cfg, Method::PpiPlusPlus);
    if !matches!(c.weighting.family, WeightingFamily::ScaledIdentity { .. }) {
        c.weighting.family = WeightingFamily::ScaledIdentity { lambda: None };
    }
    estimate(d, t, &c)
}

/// PSPA; a `Diagonal { omega: Some(..) }` weighting forces the weights.
pub fn estimate_pspa(d: &Dataset, t: &TargetSpec, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let mut c = with_method(cfg, Method::Pspa);
    if !matches!(c.weighting.family, WeightingFamily::Diagonal { .. }) {
        c.weighting.family = WeightingFamily::Diagonal { omega: None };
    }
    estimate(d, t, &c)
}
