//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{IpdError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue floor used when inverting bread matrices.
pub const EIGEN_FLOOR_REL: f64 = 1e-12;

/// Inverse of a symmetric matrix via eigendecomposition.
///
/// Eigenvalues below `1e-12 * tr(H) / dim` are rejected with a rank error
/// instead of being silently regularised.
pub fn sym_inverse(h: &Matrix) -> Result<Matrix> {
    let dim = h.nrows();
    if dim != h.ncols() {
        return Err(IpdError::DimensionMismatch { expected: dim, found: h.ncols() });
    }
    let sym = symmetrize(h);
    let floor = EIGEN_FLOOR_REL * sym.trace() / dim as f64;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(floor > 0.0) || !(min > floor) {
        return Err(IpdError::Rank { min_eigenvalue: min, floor });
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * Matrix::from_diagonal(&inv_vals) * v.transpose())))
}

/// Solves `a x = b` for a general square `a` by LU with a relative pivot check.
pub fn solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    let dim = a.nrows();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(IpdError::Rank { min_eigenvalue: 0.0, floor: 0.0 });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = (0..dim).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    let floor = EIGEN_FLOOR_REL * scale;
    if !(min_pivot > floor) {
        return Err(IpdError::Rank { min_eigenvalue: min_pivot, floor });
    }
    lu.solve(b).ok_or(IpdError::Rank { min_eigenvalue: min_pivot, floor })
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Sample covariance (divisor `n - 1`) of a list of equal-length vectors.
/// Zero matrix when fewer than two vectors are supplied.
pub fn covariance_of(rows: &[Vector], dim: usize) -> Matrix {
    let n = rows.len();
    let mut out = Matrix::zeros(dim, dim);
    if n < 2 {
        return out;
    }
    let mut mean = Vector::zeros(dim);
    for r in rows {
        mean += r;
    }
    mean /= n as f64;
    for r in rows {
        let c = r - &mean;
        out += &c * c.transpose();
    }
    out / (n - 1) as f64
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_spd() {
        let h = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = sym_inverse(&h).unwrap();
        let id = &h * &inv;
        assert!((id - Matrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_is_rank_error() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sym_inverse(&h), Err(IpdError::Rank { .. })));
        let z = Matrix::zeros(2, 2);
        assert!(matches!(solve(&z, &Vector::zeros(2)), Err(IpdError::Rank { .. })));
    }

    #[test]
    fn covariance_matches_scalar() {
        let rows = [Vector::from_element(1, 1.0), Vector::from_element(1, 3.0)];
        assert_eq!(covariance_of(&rows, 1)[(0, 0)], 2.0);
    }
}
