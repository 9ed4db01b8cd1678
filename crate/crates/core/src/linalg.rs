//! Dense containers and the small amount of column arithmetic the estimators share.
//!
//! Matrices are `nalgebra` dense matrices. Storage is column-major, which is
//! what coordinate descent wants: every update touches one column at a time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix (observations in rows, variables in columns).
pub type DenseMatrix = DMatrix<f64>;

/// Dense real vector.
pub type RealVector = DVector<f64>;

/// Relative size below which a column's standard deviation counts as zero.
const ZERO_SCALE: f64 = 1e-12;

pub fn ensure_finite_matrix(matrix: &DenseMatrix, what: &str) -> Result<()> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    match matrix.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite(format!(
            "{what}[{}, {}]",
            pos % matrix.nrows(),
            pos / matrix.nrows()
        ))),
        None => Ok(()),
    }
}

pub fn ensure_finite_vector(vector: &RealVector, what: &str) -> Result<()> {
    match vector.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite(format!("{what}[{pos}]"))),
        None => Ok(()),
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Returns `v - mean(v)` together with the mean.
pub fn center_vector(v: &RealVector) -> (RealVector, f64) {
    let m = mean(v.as_slice());
    (v.map(|x| x - m), m)
}

/// Centers every column; returns the centered copy and the column means.
pub fn center_columns(matrix: &DenseMatrix) -> (DenseMatrix, RealVector) {
    let mut out = matrix.clone();
    let mut means = RealVector::zeros(matrix.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let m = mean(col.as_slice());
        col.add_scalar_mut(-m);
        means[j] = m;
    }
    (out, means)
}

/// Sample variance with divisor `n`.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// `XᵀX / n`.
pub fn scaled_gram(design: &DenseMatrix) -> DenseMatrix {
    let n = design.nrows() as f64;
    let mut gram = design.tr_mul(design);
    gram /= n;
    // tr_mul is symmetric up to rounding only; force exact symmetry.
    for j in 0..gram.ncols() {
        for i in (j + 1)..gram.nrows() {
            let v = gram[(i, j)];
            gram[(j, i)] = v;
        }
    }
    gram
}

/// Column means and scales from [`standardize`], enough to undo it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationInfo {
    pub means: RealVector,
    /// Standard deviations with divisor `n`; strictly positive.
    pub scales: RealVector,
}

impl StandardizationInfo {
    pub fn unstandardize(&self, standardized: &DenseMatrix) -> DenseMatrix {
        let mut out = standardized.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.apply(|v| *v = *v * s + m);
        }
        out
    }
}

/// Centers each column and divides by its (divisor-`n`) standard deviation.
pub fn standardize(matrix: &DenseMatrix) -> Result<(DenseMatrix, StandardizationInfo)> {
    ensure_finite_matrix(matrix, "matrix")?;
    let mut out = matrix.clone();
    let mut means = RealVector::zeros(matrix.ncols());
    let mut scales = RealVector::zeros(matrix.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let m = mean(col.as_slice());
        let s = variance(col.as_slice()).sqrt();
        if !(s > ZERO_SCALE * (1.0 + m.abs())) {
            return Err(Error::ZeroVarianceColumn(j));
        }
        col.apply(|v| *v = (*v - m) / s);
        means[j] = m;
        scales[j] = s;
    }
    Ok((out, StandardizationInfo { means, scales }))
}

/// True when every column has mean 0 and divisor-`n` scale 1 within `tol`.
pub fn is_standardized(matrix: &DenseMatrix, tol: f64) -> bool {
    matrix.column_iter().all(|col| {
        let m = mean(col.as_slice());
        let s = variance(col.as_slice()).sqrt();
        m.abs() <= tol && (s - 1.0).abs() <= tol
    })
}

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`.
pub fn cholesky_lower(matrix: &DenseMatrix) -> Option<DenseMatrix> {
    nalgebra::Cholesky::new(matrix.clone()).map(|c| c.l())
}
