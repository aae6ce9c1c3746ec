//! Small dense symmetric linear algebra.
//!
//! Everything here is sized for species-count matrices (a handful of rows),
//! so the eigensolver is a plain cyclic Jacobi iteration and matrices are
//! stored as flat row-major vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_REL_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Default relative tolerance for [`classify_definiteness`].
pub const DEFAULT_DEFINITENESS_TOL: f64 = 1e-10;

/// A real symmetric matrix, stored densely in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from rows, requiring exact symmetry and finite entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidMatrix(
                "matrix must have at least one row".into(),
            ));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let m = SymMatrix { dim, data };
        m.check()?;
        Ok(m)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    fn check(&self) -> Result<()> {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j);
                if !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i},{j}) is not finite"
                    )));
                }
                if j > i && v != self.get(j, i) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i},{j}) = {v} differs from ({j},{i}) = {}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `D A D` for the diagonal matrix `D = diag(d)`.
    pub fn congruence_diag(&self, d: &[f64]) -> SymMatrix {
        assert_eq!(d.len(), self.dim);
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.data[i * self.dim + j] = (d[i] * d[j]) * self.get(i, j);
            }
        }
        out
    }

    /// `P^T A P` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SymMatrix {
        assert_eq!(perm.len(), self.dim);
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.data[i * self.dim + j] = self.get(perm[i], perm[j]);
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

/// Eigenvalues (descending) and the matching orthonormal eigenvectors,
/// stored as columns of a row-major `dim x dim` array.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    pub eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
    dim: usize,
}

impl EigenDecomp {
    /// Component `row` of eigenvector `col`.
    #[inline]
    pub fn vector_entry(&self, row: usize, col: usize) -> f64 {
        self.eigenvectors[row * self.dim + col]
    }

    pub fn eigenvector(&self, col: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.vector_entry(r, col)).collect()
    }

    /// `Q diag(f(lambda)) Q^T`, symmetrized.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n)
                    .map(|k| self.vector_entry(i, k) * mapped[k] * self.vector_entry(j, k))
                    .sum();
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomp> {
    a.check()?;
    let n = a.dim;
    let mut w = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let threshold = JACOBI_REL_TOL * a.frobenius();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[i * n + j] * w[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[q * n + q] - w[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns p, q
                for k in 0..n {
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    w[k * n + p] = c * akp - s * akq;
                    w[k * n + q] = s * akp + c * akq;
                }
                // rows p, q
                for k in 0..n {
                    let apk = w[p * n + k];
                    let aqk = w[q * n + k];
                    w[p * n + k] = c * apk - s * aqk;
                    w[q * n + k] = s * apk + c * aqk;
                }
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| w[y * n + y].total_cmp(&w[x * n + x]));
    let eigenvalues = order.iter().map(|&k| w[k * n + k]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[row * n + col] = v[row * n + k];
        }
    }
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors,
        dim: n,
    })
}

/// Largest absolute eigenvalue. For symmetric input this is the operator norm.
pub fn spectral_radius(a: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(a)?;
    Ok(eig
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, l| acc.max(l.abs())))
}

/// `|A| = Q diag(|lambda_i|) Q^T`.
pub fn matrix_abs(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(sym_eigen(a)?.reassemble(f64::abs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definiteness {
    /// Positive semi-definite (including the boundary case of a zero eigenvalue).
    Psd,
    Indefinite,
}

/// Indefinite iff the smallest eigenvalue is below `-tol * max(1, rho(a))`.
pub fn classify_definiteness(a: &SymMatrix, tol: f64) -> Result<Definiteness> {
    let eig = sym_eigen(a)?;
    let rho = eig
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, l| acc.max(l.abs()));
    let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
    Ok(if min < -tol * rho.max(1.0) {
        Definiteness::Indefinite
    } else {
        Definiteness::Psd
    })
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns the offending pivot when it falls below `pivot_tol`.
pub fn solve_dense(
    a: &[Vec<f64>],
    b: &[f64],
    pivot_tol: f64,
) -> std::result::Result<Vec<f64>, f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[piv][col].abs() < pivot_tol {
            return Err(m[piv][col]);
        }
        m.swap(col, piv);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                let (top, rest) = m.split_at_mut(row);
                for (a, b) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                    *a -= factor * b;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - tail) / m[row][row];
    }
    Ok(x)
}
