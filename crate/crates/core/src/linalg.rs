//! Dense real-symmetric linear algebra shared by every physics module.
//!
//! Hamiltonians in this crate are real symmetric, so the only eigensolver is a
//! full dense symmetric one. Eigenvectors are sign-fixed so that the
//! largest-magnitude component of every column is positive, which makes
//! ensemble runs bit-reproducible.

use std::ops::Mul;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{ensure_dims, QfiError, Result};

pub type C64 = Complex64;

/// Square real matrix whose symmetry is enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Mat<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(QfiError::InvalidInput("matrix dimension must be at least 1".into()));
        }
        Ok(Self { data: Mat::zeros(dim, dim) })
    }

    /// Builds a matrix from the upper triangle of `f`; the lower triangle is mirrored.
    pub fn from_upper_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m.data[(i, j)] = v;
                m.data[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Row-major input; rejects anything that is not exactly symmetric.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        ensure_dims(dim * dim, entries.len())?;
        for i in 0..dim {
            for j in (i + 1)..dim {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(QfiError::InvalidInput(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Self::from_upper_fn(dim, |i, j| entries[i * dim + j])
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(diag.len())?;
        for (i, &d) in diag.iter().enumerate() {
            m.data[(i, i)] = d;
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_diagonal(&vec![1.0; dim])
    }

    /// Wraps a square matrix, replacing it by `(A + Aᵀ)/2`.
    pub fn symmetrized(a: MatRef<'_, f64>) -> Result<Self> {
        ensure_dims(a.nrows(), a.ncols())?;
        Self::from_upper_fn(a.nrows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    /// Column `j`, which equals row `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        self.data.col_as_slice(j)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)]).collect()
    }

    /// Adds `v` to entries (i, j) and (j, i); a diagonal entry receives `v` once.
    pub(crate) fn add_symmetric(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] += v;
        if i != j {
            self.data[(j, i)] += v;
        }
    }

    /// Adds `v` to the single entry (i, j). Callers must keep the matrix symmetric.
    pub(crate) fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] += v;
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for &v in self.column(j) {
                m = m.max(v.abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim()).all(|j| self.column(j).iter().all(|v| v.is_finite()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                m = m.max((self.data[(i, j)] - self.data[(j, i)]).abs());
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        (0..self.dim())
            .map(|j| self.column(j).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_dims(self.dim(), other.dim())?;
        Ok(Self { data: &self.data + &other.data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        ensure_dims(self.dim(), other.dim())?;
        Ok(Self { data: &self.data - &other.data })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let n = self.dim();
        Self { data: Mat::from_fn(n, n, |i, j| s * self.data[(i, j)]) }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dims(self.dim(), x.len())?;
        let n = self.dim();
        let mut y = vec![0.0; n];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.column(j)) {
                *yi += a * xj;
            }
        }
        Ok(y)
    }

    /// ⟨x|M|x⟩ for a real vector.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let y = self.mul_vec(x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a * b).sum())
    }

    /// ⟨ψ|M|ψ⟩ for a complex vector; real because M is symmetric.
    pub fn expectation(&self, psi: &[C64]) -> Result<f64> {
        ensure_dims(self.dim(), psi.len())?;
        let mut acc = 0.0;
        for (j, pj) in psi.iter().enumerate() {
            let mut col = C64::new(0.0, 0.0);
            for (a, pi) in self.column(j).iter().zip(psi) {
                col += pi.conj() * *a;
            }
            acc += (col * pj).re;
        }
        Ok(acc)
    }

    pub fn matmul(&self, other: &Self) -> Result<Mat<f64>> {
        ensure_dims(self.dim(), other.dim())?;
        Ok(&self.data * &other.data)
    }
}

/// Orthonormal eigenvectors (columns) and ascending eigenvalues of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: Mat<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    /// Eigenvector `mu` as a slice of its components in the original basis.
    pub fn vector(&self, mu: usize) -> &[f64] {
        self.vectors.col_as_slice(mu)
    }

    /// Component `c_mu(alpha) = <alpha|psi_mu>`.
    pub fn component(&self, mu: usize, alpha: usize) -> f64 {
        self.vectors[(alpha, mu)]
    }

    /// Amplitudes `a_mu = <psi_mu|psi>` of a state given in the original basis.
    pub fn amplitudes(&self, psi: &[C64]) -> Result<Vec<C64>> {
        ensure_dims(self.dim(), psi.len())?;
        Ok((0..self.dim())
            .map(|mu| {
                self.vector(mu)
                    .iter()
                    .zip(psi)
                    .fold(C64::new(0.0, 0.0), |acc, (v, p)| acc + p * *v)
            })
            .collect())
    }

    pub fn amplitudes_real(&self, psi: &[f64]) -> Result<Vec<C64>> {
        let c: Vec<C64> = psi.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.amplitudes(&c)
    }

    /// Maps eigenbasis amplitudes back to the original basis.
    pub fn to_original_basis(&self, amps: &[C64]) -> Result<Vec<C64>> {
        ensure_dims(self.dim(), amps.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for (mu, a) in amps.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.vector(mu)) {
                *o += a * *v;
            }
        }
        Ok(out)
    }

    /// `e^{-iHt}|psi0>` expressed in the original basis.
    pub fn propagate(&self, psi0: &[C64], t: f64) -> Result<Vec<C64>> {
        let amps: Vec<C64> = self
            .amplitudes(psi0)?
            .into_iter()
            .zip(&self.values)
            .map(|(a, &e)| a * C64::from_polar(1.0, -e * t))
            .collect();
        self.to_original_basis(&amps)
    }

    /// ‖VᵀV − I‖_max.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                m = m.max((g[(i, j)] - target).abs());
            }
        }
        m
    }

    /// ‖HV − V diag(E)‖_max.
    pub fn residual(&self, h: &SymmetricMatrix) -> Result<f64> {
        ensure_dims(self.dim(), h.dim())?;
        let hv = h.as_mat() * &self.vectors;
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max((hv[(i, j)] - self.vectors[(i, j)] * self.values[j]).abs());
            }
        }
        Ok(m)
    }

    /// V diag(E) Vᵀ.
    pub fn reconstruct(&self) -> Mat<f64> {
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        &scaled * self.vectors.transpose()
    }
}

/// Full eigendecomposition of a real symmetric matrix.
pub fn eigh(h: &SymmetricMatrix) -> Result<EigenSystem> {
    if !h.is_finite() {
        return Err(QfiError::InvalidInput("matrix has non-finite entries".into()));
    }
    let evd = h.as_mat().self_adjoint_eigen(Side::Lower).map_err(|e| {
        QfiError::Numerical(format!(
            "symmetric eigensolver failed ({e:?}) for dim {} with max|H| = {:e}",
            h.dim(),
            h.max_abs()
        ))
    })?;
    let n = h.dim();
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut vectors = evd.U().to_owned();
    for j in 0..n {
        let col = vectors.col_as_slice(j);
        let mut imax = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[imax].abs() {
                imax = i;
            }
        }
        if col[imax] < 0.0 {
            for v in vectors.col_as_slice_mut(j) {
                *v = -*v;
            }
        }
    }
    Ok(EigenSystem { values, vectors })
}

/// Kronecker product with `(A⊗B)[(i·dimB + k),(j·dimB + l)] = A[i][j]·B[k][l]`.
pub fn kron<T>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<Mat<T>>
where
    T: Copy + Mul<Output = T>,
{
    let rows = a
        .nrows()
        .checked_mul(b.nrows())
        .ok_or_else(|| QfiError::Size(format!("{} x {} rows overflow", a.nrows(), b.nrows())))?;
    let cols = a
        .ncols()
        .checked_mul(b.ncols())
        .ok_or_else(|| QfiError::Size(format!("{} x {} cols overflow", a.ncols(), b.ncols())))?;
    if rows == 0 || cols == 0 {
        return Err(QfiError::InvalidInput("kron of an empty matrix".into()));
    }
    let (br, bc) = (b.nrows(), b.ncols());
    Ok(Mat::from_fn(rows, cols, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    }))
}

/// Vᵀ M V: `m` expressed in the eigenbasis of `es`, symmetrized.
pub fn to_eigenbasis(m: &SymmetricMatrix, es: &EigenSystem) -> Result<SymmetricMatrix> {
    ensure_dims(es.dim(), m.dim())?;
    let mv = m.as_mat() * es.eigenvectors();
    let vtmv = es.eigenvectors().transpose() * &mv;
    SymmetricMatrix::symmetrized(vtmv.as_ref())
}

/// Pure state amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexState {
    pub amplitudes: Vec<C64>,
}

impl ComplexState {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn from_real(x: &[f64]) -> Self {
        Self { amplitudes: x.iter().map(|&v| C64::new(v, 0.0)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// Returns an error unless the norm is 1 within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tol {
            return Err(QfiError::InvalidInput(format!("state norm is {n}, expected 1")));
        }
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        ensure_dims(self.dim(), other.dim())?;
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
