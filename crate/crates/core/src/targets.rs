//! Estimands as M-estimation problems.
//!
//! A target is a per-row loss `l_theta(x, y)` with analytic gradient (the
//! score) and Hessian. All row-level functions take the *design row*, i.e.
//! the covariate vector with the intercept column already prepended when the
//! target has one; [`TargetSpec::design`] builds it from raw covariates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{IpdError, Result};
use crate::linalg::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Mean,
    LinearRegression,
    LogisticRegression,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Mean => "mean",
            TargetKind::LinearRegression => "ols",
            TargetKind::LogisticRegression => "logistic",
        })
    }
}

impl FromStr for TargetKind {
    type Err = IpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(TargetKind::Mean),
            "ols" | "linear" | "linear_regression" => Ok(TargetKind::LinearRegression),
            "logistic" | "logit" | "logistic_regression" => Ok(TargetKind::LogisticRegression),
            other => Err(IpdError::InvalidConfig(format!("unknown target '{other}' (expected mean, ols or logistic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub dim: usize,
    pub intercept: bool,
}

impl TargetSpec {
    pub fn mean() -> Self {
        TargetSpec { kind: TargetKind::Mean, dim: 1, intercept: false }
    }

    pub fn linear(p_x: usize, intercept: bool) -> Result<Self> {
        Self::regression(TargetKind::LinearRegression, p_x, intercept)
    }

    pub fn logistic(p_x: usize, intercept: bool) -> Result<Self> {
        Self::regression(TargetKind::LogisticRegression, p_x, intercept)
    }

    pub fn new(kind: TargetKind, p_x: usize, intercept: bool) -> Result<Self> {
        match kind {
            TargetKind::Mean => Ok(Self::mean()),
            k => Self::regression(k, p_x, intercept),
        }
    }

    fn regression(kind: TargetKind, p_x: usize, intercept: bool) -> Result<Self> {
        let dim = p_x + usize::from(intercept);
        if dim == 0 {
            return Err(IpdError::InvalidConfig("regression target needs at least one parameter".into()));
        }
        Ok(TargetSpec { kind, dim, intercept })
    }

    /// Number of raw covariates the target consumes.
    pub fn p_x(&self) -> usize {
        match self.kind {
            TargetKind::Mean => 0,
            _ => self.dim - usize::from(self.intercept),
        }
    }

    /// Design row for raw covariates `x`. The mean target ignores `x`.
    pub fn design(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            TargetKind::Mean => Ok(Vec::new()),
            _ => {
                if x.len() != self.p_x() {
                    return Err(IpdError::DimensionMismatch { expected: self.p_x(), found: x.len() });
                }
                let mut row = Vec::with_capacity(self.dim);
                if self.intercept {
                    row.push(1.0);
                }
                row.extend_from_slice(x);
                Ok(row)
            }
        }
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(IpdError::DimensionMismatch { expected: self.dim, found: theta.len() });
        }
        if self.kind != TargetKind::Mean && x.len() != self.dim {
            return Err(IpdError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverControls {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_halving_max: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls { max_iter: 100, grad_tol: 1e-8, step_halving_max: 30 }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.grad_tol > 0.0) {
            return Err(IpdError::InvalidConfig("max_iter must be >= 1 and grad_tol > 0".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn log1p_exp(t: f64) -> f64 {
    t.max(0.0) + libm::log1p(libm::exp(-t.abs()))
}

/// Per-row loss. Logistic labels may be soft (any real, in practice [0, 1]).
pub fn loss(target: &TargetSpec, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
    target.check(theta, x)?;
    Ok(match target.kind {
        TargetKind::Mean => 0.5 * (y - theta[0]) * (y - theta[0]),
        TargetKind::LinearRegression => {
            let r = y - dot(x, theta);
            0.5 * r * r
        }
        TargetKind::LogisticRegression => {
            let eta = dot(x, theta);
            -y * eta + log1p_exp(eta)
        }
    })
}

/// Gradient of [`loss`] with respect to `theta`.
pub fn score(target: &TargetSpec, theta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
    target.check(theta, x)?;
    Ok(score_unchecked(target, theta, x, y))
}

pub(crate) fn score_unchecked(target: &TargetSpec, theta: &[f64], x: &[f64], y: f64) -> Vec<f64> {
    match target.kind {
        TargetKind::Mean => vec![theta[0] - y],
        TargetKind::LinearRegression => {
            let r = dot(x, theta) - y;
            x.iter().map(|v| r * v).collect()
        }
        TargetKind::LogisticRegression => {
            let r = sigmoid(dot(x, theta)) - y;
            x.iter().map(|v| r * v).collect()
        }
    }
}

/// Hessian of [`loss`]; symmetric positive semidefinite for every row.
pub fn hessian(target: &TargetSpec, theta: &[f64], x: &[f64], y: f64) -> Result<Matrix> {
    target.check(theta, x)?;
    let mut h = Matrix::zeros(target.dim, target.dim);
    add_hessian(target, theta, x, y, 1.0, &mut h);
    Ok(h)
}

/// Accumulates `weight * hessian(x)` into `acc`.
pub(crate) fn add_hessian(target: &TargetSpec, theta: &[f64], x: &[f64], _y: f64, weight: f64, acc: &mut Matrix) {
    let curvature = match target.kind {
        TargetKind::Mean => {
            acc[(0, 0)] += weight;
            return;
        }
        TargetKind::LinearRegression => 1.0,
        TargetKind::LogisticRegression => {
            let s = sigmoid(dot(x, theta));
            s * (1.0 - s)
        }
    };
    let w = weight * curvature;
    for i in 0..x.len() {
        let wi = w * x[i];
        for j in 0..x.len() {
            acc[(i, j)] += wi * x[j];
        }
    }
}

/// Result of a Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub iterations: usize,
}

/// Newton iteration for a square system `S(theta) = 0` supplied as a closure
/// returning `(S, dS/dtheta)`.
///
/// Convergence requires both `|S| / (1 + |theta|) <= grad_tol` and a Newton
/// step with `|step| / (1 + |theta|) <= sqrt(grad_tol)`. The step condition
/// keeps completely separated logistic problems, whose score decays while
/// `|theta|` grows without bound, from being reported as converged.
pub fn newton<F>(mut eval: F, init: &[f64], controls: &SolverControls) -> Result<Solution>
where
    F: FnMut(&[f64]) -> Result<(Vector, Matrix)>,
{
    controls.validate()?;
    let step_tol = libm::sqrt(controls.grad_tol);
    let mut theta = Vector::from_column_slice(init);
    let (mut s, mut j) = eval(theta.as_slice())?;
    for iter in 1..=controls.max_iter {
        // A Jacobian that collapses after the first step signals divergence
        // (saturated logistic rows), not a rank-deficient design.
        let step = match linalg::solve(&j, &(-&s)) {
            Ok(step) => step,
            Err(IpdError::Rank { .. }) if iter > 1 => break,
            Err(e) => return Err(e),
        };
        let scale = 1.0 + theta.norm();
        if s.norm() / scale <= controls.grad_tol && step.norm() / scale <= step_tol {
            return Ok(Solution { theta: theta.as_slice().to_vec(), iterations: iter - 1 });
        }

        let base = s.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=controls.step_halving_max {
            let cand = &theta + &step * t;
            match eval(cand.as_slice()) {
                Ok((cs, cj)) if cs.iter().all(|v| v.is_finite()) && cs.norm() <= base => {
                    accepted = Some((cand, cs, cj));
                    break;
                }
                _ => t *= 0.5,
            }
        }
        // No decrease found: take the smallest tried step and let the
        // iteration budget decide.
        let (cand, cs, cj) = match accepted {
            Some(a) => a,
            None => {
                let cand = &theta + &step * t;
                let (cs, cj) = eval(cand.as_slice())?;
                (cand, cs, cj)
            }
        };
        theta = cand;
        s = cs;
        j = cj;
        if !theta.iter().all(|v| v.is_finite()) || theta.norm() > 1e8 {
            break;
        }
    }
    Err(IpdError::NonConvergence { iterations: controls.max_iter, last_iterate: theta.as_slice().to_vec() })
}

/// One row of a weighted M-estimation problem. `x` is a design row.
#[derive(Debug, Clone, Copy)]
pub struct WeightedRow<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub weight: f64,
}

/// Solves `sum_i w_i * score(theta; x_i, y_i) = 0`. Weights may be negative.
/// The score is normalised by `sum |w_i|` so that rescaling all weights
/// leaves the iteration unchanged.
pub fn solve_weighted(
    target: &TargetSpec,
    rows: &[WeightedRow<'_>],
    controls: &SolverControls,
    init: &[f64],
) -> Result<Solution> {
    let total: f64 = rows.iter().map(|r| r.weight.abs()).sum();
    if !(total > 0.0) {
        return Err(IpdError::Validation("sum of absolute weights must be positive".into()));
    }
    if target.kind != TargetKind::Mean && rows.len() < target.dim {
        return Err(IpdError::InsufficientData { needed: target.dim, available: rows.len() });
    }
    if init.len() != target.dim {
        return Err(IpdError::DimensionMismatch { expected: target.dim, found: init.len() });
    }
    for r in rows {
        target.check(init, r.x)?;
    }
    newton(
        |theta| {
            let mut s = Vector::zeros(target.dim);
            let mut h = Matrix::zeros(target.dim, target.dim);
            for r in rows {
                let w = r.weight / total;
                let g = score_unchecked(target, theta, r.x, r.y);
                for (k, gk) in g.iter().enumerate() {
                    s[k] += w * gk;
                }
                add_hessian(target, theta, r.x, r.y, w, &mut h);
            }
            Ok((s, h))
        },
        init,
        controls,
    )
}
