//! Dense symmetric matrices and the spectral primitives built on them.
//!
//! [`SymMatrix`] is immutable once built and symmetric by construction: every
//! constructor either mirrors one triangle or rejects asymmetric input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symmetric `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle `i <= j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut inner = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Ok(Self { inner })
    }

    /// Builds the matrix from a row-major upper triangle, `upper[i]` holding
    /// entries `(i, i), (i, i+1), ..., (i, n-1)`.
    pub fn from_upper_rows(upper: Vec<Vec<f64>>) -> Result<Self> {
        let n = upper.len();
        for (i, row) in upper.iter().enumerate() {
            if row.len() != n - i {
                return Err(Error::DimensionMismatch {
                    context: "upper triangle row",
                    expected: n - i,
                    found: row.len(),
                });
            }
        }
        Self::from_upper_fn(n, |i, j| upper[i][j - i])
    }

    /// Wraps a full matrix, rejecting it unless it is exactly symmetric.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Empty);
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                // NaN pairs are allowed through here; eigh rejects them.
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { inner: m })
    }

    /// Symmetrizes `(m + m') / 2`. Intended for products that are symmetric in
    /// exact arithmetic.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::from_upper_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "square matrix row",
                    expected: n,
                    found: row.len(),
                });
            }
        }
        Self::from_dmatrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_upper_fn(n, |_, _| 0.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_upper_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_upper_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Matrix with every entry equal to `value`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_upper_fn(n, |_, _| value)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.order())
            .map(|i| (0..self.order()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_orders(self, other)?;
        Ok(Self {
            inner: &self.inner - &other.inner,
        })
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_orders(self, other)?;
        Ok(Self {
            inner: &self.inner + &other.inner,
        })
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        Self {
            inner: &self.inner * factor,
        }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.order() {
            return Err(Error::DimensionMismatch {
                context: "matrix-vector product",
                expected: self.order(),
                found: v.len(),
            });
        }
        let out = &self.inner * DVector::from_column_slice(v);
        Ok(out.iter().copied().collect())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> Result<f64> {
        check_orders(self, other)?;
        Ok(self
            .inner
            .iter()
            .zip(other.inner.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        let n = self.order();
        for i in 0..n {
            for j in i..n {
                if !self.get(i, j).is_finite() {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

fn check_orders(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.order() != b.order() {
        return Err(Error::OrderMismatch {
            left: a.order(),
            right: b.order(),
        });
    }
    Ok(())
}

/// Sorted eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`, with its
    /// largest-magnitude coordinate positive.
    pub eigenvectors: DMatrix<f64>,
    /// `gaps[k] = eigenvalues[k] - eigenvalues[k + 1]`.
    pub gaps: Vec<f64>,
}

impl SpectralSummary {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    /// Leading `k` eigenvectors as an `n x k` matrix.
    pub fn top_vectors(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).into_owned()
    }

    /// `V diag(lambda) V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * lambda * self.eigenvectors.transpose()
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted descending (ties keep the
/// solver's order) and eigenvector signs fixed so the largest-magnitude
/// coordinate is positive.
pub fn eigh(m: &SymMatrix) -> Result<SpectralSummary> {
    if let Some((row, col)) = m.first_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let n = m.order();
    let eig = m.inner.clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            eigenvectors[(r, dst)] = sign * col[r];
        }
    }
    let gaps = eigenvalues.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(SpectralSummary {
        eigenvalues,
        eigenvectors,
        gaps,
    })
}

pub fn frobenius_norm(m: &SymMatrix) -> f64 {
    m.inner.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value, i.e. `max |lambda_i|`.
pub fn operator_norm(m: &SymMatrix) -> Result<f64> {
    let s = eigh(m)?;
    Ok(operator_norm_of(&s))
}

pub(crate) fn operator_norm_of(s: &SpectralSummary) -> f64 {
    s.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `trace(a o b) = sum_i a(i,i) b(i,i)`.
pub fn hadamard_trace(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_orders(a, b)?;
    Ok((0..a.order()).map(|i| a.get(i, i) * b.get(i, i)).sum())
}

/// `H^l M H^r` with `H = I - 11'/n`; `l`, `r` select the left and right factor.
///
/// One-sided centering is not symmetric in general, hence the plain matrix.
/// [`double_center`] is the symmetric two-sided case.
pub fn center_conjugate(m: &SymMatrix, left: bool, right: bool) -> DMatrix<f64> {
    let n = m.order();
    let mut out = m.inner.clone();
    if right {
        // remove row means: (M H)(i,j) = M(i,j) - mean_k M(i,k)
        for i in 0..n {
            let mean = out.row(i).iter().sum::<f64>() / n as f64;
            for j in 0..n {
                out[(i, j)] -= mean;
            }
        }
    }
    if left {
        for j in 0..n {
            let mean = out.column(j).iter().sum::<f64>() / n as f64;
            for i in 0..n {
                out[(i, j)] -= mean;
            }
        }
    }
    out
}

/// `H M H`.
pub fn double_center(m: &SymMatrix) -> SymMatrix {
    let c = center_conjugate(m, true, true);
    // Symmetric in exact arithmetic; mirror the upper triangle so it is exactly so.
    SymMatrix::from_upper_fn(m.order(), |i, j| c[(i, j)]).expect("order >= 1")
}

/// Centering projector `I - 11'/n`.
pub fn centering_matrix(n: usize) -> Result<SymMatrix> {
    let off = 1.0 / n as f64;
    SymMatrix::from_upper_fn(n, |i, j| if i == j { 1.0 - off } else { -off })
}

/// Orthonormality defect `||V'V - I||_F`.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let gram = v.transpose() * v;
    let id = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    (gram - id).norm()
}
