//! Dense complex linear algebra.
//!
//! Everything downstream works on small-to-medium dense matrices (a few
//! hundred rows at most), so the types here are plain row-major buffers of
//! [`C64`]. The inner product convention is fixed crate-wide:
//!
//! ```text
//! <x, phi> = sum_m x_m * conj(phi_m)
//! ```
//!
//! i.e. linear in the first argument and conjugate-linear in the second.

mod eigen;
mod lstsq;

pub use eigen::{
    hermitian_eigen, hermitian_extreme_eigenpair, hermitian_extreme_eigenpair_with, EigenPair,
    EigenStrategy, HermitianEigen, Which,
};
pub use lstsq::least_squares;

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Absolute tolerance used when checking the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: |m[{row},{col}] - conj(m[{col},{row}])| = {deviation:e}")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("empty input")]
    Empty,
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Inner product `<x, phi> = sum x_m conj(phi_m)`.
#[inline]
pub fn inner(x: &[C64], phi: &[C64]) -> C64 {
    debug_assert_eq!(x.len(), phi.len());
    x.iter().zip(phi).map(|(a, b)| a * b.conj()).sum()
}

#[inline]
pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

#[inline]
pub fn norm(x: &[C64]) -> f64 {
    norm_sqr(x).sqrt()
}

/// A non-empty vector of finite complex numbers. Serializes as a list of
/// `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct CVector(Vec<C64>);

impl TryFrom<Vec<C64>> for CVector {
    type Error = LinalgError;
    fn try_from(entries: Vec<C64>) -> Result<Self> {
        CVector::new(entries)
    }
}

impl From<CVector> for Vec<C64> {
    fn from(v: CVector) -> Self {
        v.0
    }
}

impl CVector {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LinalgError::Empty);
        }
        if let Some(i) = entries
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Self(entries))
    }

    /// Builds a vector without validating the invariants.
    pub(crate) fn from_vec_unchecked(entries: Vec<C64>) -> Self {
        Self(entries)
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "CVector length must be positive");
        Self(vec![C64::new(0.0, 0.0); len])
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Unit basis vector `e_index`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[index] = C64::new(1.0, 0.0);
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).sum()
    }

    /// `<self, other>` under the crate convention.
    pub fn inner(&self, other: &CVector) -> C64 {
        inner(&self.0, &other.0)
    }

    pub fn scale(&self, factor: C64) -> CVector {
        CVector(self.0.iter().map(|z| z * factor).collect())
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len());
        CVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len());
        CVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real matrix from nested rows.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LinalgError::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend(row.iter().map(|&v| C64::new(v, 0.0)));
        }
        Self::new(r, c, data)
    }

    /// Stacks the given vectors as rows.
    pub fn from_rows(rows: &[CVector]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r.as_slice());
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn scale(&self, factor: f64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H * y`.
    pub fn adjoint_matvec(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.rows, "adjoint matvec dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * yi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in out.row_mut(i).iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `self^H self`.
    pub fn gram(&self) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                if ai == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += ai * row[j];
                }
            }
        }
        for i in 0..n {
            g.data[i * n + i].im = 0.0;
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i].conj();
            }
        }
        g
    }

    /// Submatrix built from the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        CMatrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> CMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        CMatrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// Checks `m[i,j] == conj(m[j,i])` to within `tol`, returning the first offending entry.
    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        for i in 0..self.rows {
            for j in i..self.cols {
                let deviation = (self[(i, j)] - self[(j, i)].conj()).norm();
                if !(deviation <= tol) {
                    return Err(LinalgError::NotHermitian {
                        row: i,
                        col: j,
                        deviation,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.check_hermitian(tol).is_ok()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_is_conjugate_linear_in_second_argument() {
        let x = [C64::new(1.0, 0.0)];
        let phi = [C64::new(0.0, 1.0)];
        assert_eq!(inner(&x, &phi), C64::new(0.0, -1.0));
        let scaled: Vec<C64> = phi.iter().map(|p| p * C64::new(0.0, 1.0)).collect();
        // <x, i phi> = -i <x, phi>
        assert_eq!(inner(&x, &scaled), C64::new(0.0, -1.0) * inner(&x, &phi));
    }

    #[test]
    fn cvector_rejects_empty_and_nan() {
        assert_eq!(CVector::new(vec![]), Err(LinalgError::Empty));
        assert_eq!(
            CVector::new(vec![C64::new(0.0, f64::NAN)]),
            Err(LinalgError::NonFinite(0))
        );
    }

    #[test]
    fn gram_matches_adjoint_product() {
        let a = CMatrix::from_fn(4, 3, |i, j| {
            C64::new(i as f64 - j as f64, (i * j) as f64 * 0.5)
        });
        let direct = a.adjoint().matmul(&a).unwrap();
        let g = a.gram();
        for (x, y) in g.data().iter().zip(direct.data()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(g.is_hermitian(0.0));
    }

    #[test]
    fn hermitian_check_reports_entry() {
        let mut m = CMatrix::identity(3);
        m[(0, 2)] = C64::new(1.0, 1.0);
        m[(2, 0)] = C64::new(1.0, 1.0);
        match m.check_hermitian(HERMITIAN_TOL) {
            Err(LinalgError::NotHermitian { row: 0, col: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
