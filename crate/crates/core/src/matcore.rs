//! Dense real matrix utilities shared by the LMI compiler, the solver and the
//! certificate checks.
//!
//! [`Matrix`] is a plain `nalgebra` dynamic matrix. [`SymMatrix`] wraps one and
//! guarantees exact symmetry and finite entries from construction onwards, so
//! every eigenvalue query on it can go through the symmetric eigensolver.

use nalgebra::linalg::{Schur, SymmetricEigen, SVD};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense real matrix.
pub type Matrix = DMatrix<f64>;

/// Default relative tolerance for positive-definiteness checks.
pub const DEFAULT_PSD_RTOL: f64 = 1e-8;

/// Condition number above which a matrix is treated as numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must have at least one row and column")]
    Empty,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("matrix is numerically singular (condition number {cond:.3e})")]
    Singular { cond: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, MatError>;

/// Square symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Ingests `m`, replacing it by `(m + mᵀ)/2`.
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        if m.nrows() == 0 {
            return Err(MatError::Empty);
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(MatError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::new(Matrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    /// `Lᵀ M L`, which is again symmetric.
    pub fn congruence(&self, l: &Matrix) -> Result<SymMatrix> {
        if l.nrows() != self.dim() {
            return Err(MatError::DimensionMismatch {
                expected: self.dim(),
                got: l.nrows(),
            });
        }
        SymMatrix::new(l.transpose() * &self.0 * l)
    }

    /// Inverse of a positive definite matrix via Cholesky, with a condition guard.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let inv = guarded_inverse(&self.0)?;
        SymMatrix::new(inv)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        crate::io::MatrixData::from(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = crate::io::MatrixData::deserialize(d)?;
        let m = data.to_matrix().map_err(serde::de::Error::custom)?;
        SymMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MatError::NonFinite)
    }
}

pub fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(MatError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Eigenvalues of a symmetric matrix in ascending order. Only the lower
/// triangle of `m` is read.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(MatError::NoConvergence)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

/// Smallest eigenvalue of the symmetric part of a raw square matrix.
pub fn sym_min_eigenvalue(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    check_finite(m)?;
    if m.nrows() == 0 {
        return Err(MatError::Empty);
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(sym_eigenvalues(&sym)?[0])
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    // Entries are finite and symmetric by construction; the QR iteration on a
    // finite symmetric matrix converges.
    sym_eigenvalues(&m.0).map(|v| v[0]).unwrap_or(f64::NAN)
}

/// `true` iff the smallest eigenvalue of `m` exceeds `tol`.
pub fn is_positive_definite(m: &SymMatrix, tol: f64) -> Result<bool> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(MatError::BadTolerance(tol));
    }
    Ok(min_eigenvalue(m) > tol)
}

/// Relative default PSD tolerance: `1e-8` times the largest absolute entry.
pub fn default_psd_tol(m: &SymMatrix) -> f64 {
    let s = m.max_abs();
    if s > 0.0 {
        DEFAULT_PSD_RTOL * s
    } else {
        DEFAULT_PSD_RTOL
    }
}

/// Length of `svec` for an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Column-major lower-triangle vectorization with off-diagonals scaled by √2,
/// so that `svec(A)·svec(B) = trace(AB)`.
pub fn svec(m: &SymMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut v = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            let x = m.0[(i, j)];
            v.push(if i == j { x } else { x * std::f64::consts::SQRT_2 });
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> Result<SymMatrix> {
    if v.len() != svec_len(n) {
        return Err(MatError::DimensionMismatch {
            expected: svec_len(n),
            got: v.len(),
        });
    }
    if n == 0 {
        return Err(MatError::Empty);
    }
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            let x = if i == j {
                v[k]
            } else {
                v[k] / std::f64::consts::SQRT_2
            };
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    check_finite(&m)?;
    Ok(SymMatrix(m))
}

/// Eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    check_square(m)?;
    check_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Err(MatError::Empty);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(MatError::NoConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    check_finite(m)?;
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(max / min)
    }
}

/// Inverse of a square matrix, rejected when the condition number exceeds
/// [`MAX_CONDITION`].
pub fn guarded_inverse(m: &Matrix) -> Result<Matrix> {
    let cond = condition_number(m)?;
    if !(cond <= MAX_CONDITION) {
        return Err(MatError::Singular { cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(MatError::Singular { cond })
}

/// Solves `m · X = rhs` under the same condition guard as [`guarded_inverse`].
pub fn guarded_solve(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if m.nrows() != rhs.nrows() {
        return Err(MatError::DimensionMismatch {
            expected: m.nrows(),
            got: rhs.nrows(),
        });
    }
    let cond = condition_number(m)?;
    if !(cond <= MAX_CONDITION) {
        return Err(MatError::Singular { cond });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(MatError::Singular { cond })
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
