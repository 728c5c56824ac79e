//! Symmetric-matrix kernels: eigendecomposition, Cholesky, log-determinants,
//! quadratic forms. Everything downstream funnels determinant work through
//! here so it all happens in log space.

mod rowmatrix;

pub use rowmatrix::{RowMatrix, RowRef};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for eigenvalue reconstruction checks.
pub const TOL_EIG: f64 = 1e-8;

/// Symmetric d×d matrix, one triangle stored so symmetry is exact by
/// construction. The `psd` tag records that the matrix was built as a sum of
/// outer products (or is a Gram matrix), which lets `eigh` clamp round-off
/// negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    d: usize,
    // lower triangle, row-wise: (i, j) with i >= j lives at i*(i+1)/2 + j
    tri: Vec<f64>,
    psd: bool,
}

impl SymMatrix {
    pub fn zeros(d: usize) -> Self {
        SymMatrix { d, tri: vec![0.0; d * (d + 1) / 2], psd: true }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = SymMatrix::zeros(d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from a callback; only the lower triangle (i >= j) is consulted.
    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut tri = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in 0..=i {
                tri.push(f(i, j));
            }
        }
        SymMatrix { d, tri, psd: false }
    }

    /// Mark the matrix as positive semi-definite by construction.
    pub fn tag_psd(mut self) -> Self {
        self.psd = true;
        self
    }

    pub fn is_psd_tagged(&self) -> bool {
        self.psd
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(i >= j);
        i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.tri[Self::idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.tri[Self::idx(i, j)] = v;
    }

    /// self += w · x xᵀ
    pub fn add_outer(&mut self, x: &[f64], w: f64) {
        assert_eq!(x.len(), self.d);
        for i in 0..self.d {
            let wx = w * x[i];
            let row = Self::idx(i, 0);
            for j in 0..=i {
                self.tri[row + j] += wx * x[j];
            }
        }
    }

    /// self += w · x xᵀ for a sparse x given as (column indices, values),
    /// indices strictly increasing.
    pub fn add_outer_sparse(&mut self, cols: &[usize], vals: &[f64], w: f64) {
        for (a, &ia) in cols.iter().enumerate() {
            let wv = w * vals[a];
            let row = Self::idx(ia, 0);
            for (b, &jb) in cols.iter().take(a + 1).enumerate() {
                self.tri[row + jb] += wv * vals[b];
            }
        }
    }

    /// self += c · I
    pub fn add_scaled_identity(&mut self, c: f64) {
        for i in 0..self.d {
            self.tri[Self::idx(i, i)] += c;
        }
    }

    /// I + self, keeping the PSD tag (I + PSD is PSD).
    pub fn plus_identity(&self) -> Self {
        let mut m = self.clone();
        m.add_scaled_identity(1.0);
        m
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.tri {
            *v *= c;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    /// Absolute eigenvalue tolerance scaled to the matrix: 1e-10 times the
    /// largest diagonal entry (all-zero matrices get a tiny floor).
    pub fn tol_psd(&self) -> f64 {
        1e-10 * self.max_diag().max(f64::MIN_POSITIVE)
    }

    pub fn frob_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..=i {
                let v = self.tri[Self::idx(i, j)];
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }

    /// Dense row-major dump (tests and the state file use this).
    pub fn to_dense_rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn from_dense_rows(d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: data.len() });
        }
        Ok(SymMatrix::from_fn(d, |i, j| data[i * d + j]))
    }
}

/// Eigendecomposition of a SymMatrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// vectors[j] is the unit eigenvector paired with values[j].
    pub vectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Symmetric eigendecomposition with descending eigenvalues. PSD-tagged
/// inputs get round-off negatives above -tol_psd clamped to zero. The result
/// is verified by reconstruction; failure to reproduce the input within
/// TOL_EIG (relative Frobenius) is reported as non-convergence.
pub fn eigh(m: &SymMatrix) -> Result<EigenDecomposition> {
    let d = m.dim();
    let se = SymmetricEigen::try_new(m.to_dmatrix(), f64::EPSILON, 100_000)
        .ok_or(Error::EighNonConvergence { residual: f64::INFINITY })?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));

    let tol = m.tol_psd();
    let mut values = Vec::with_capacity(d);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &k in &order {
        let mut lam = se.eigenvalues[k];
        if m.is_psd_tagged() && lam < 0.0 && lam > -tol {
            lam = 0.0;
        }
        values.push(lam);
        vectors.push(se.eigenvectors.column(k).iter().copied().collect());
    }

    // Reconstruction check: || V diag(λ) Vᵀ − M ||_F against TOL_EIG · ||M||_F.
    let mut err = 0.0f64;
    for i in 0..d {
        for j in 0..=i {
            let mut r = -m.get(i, j);
            for k in 0..d {
                r += values[k] * vectors[k][i] * vectors[k][j];
            }
            err += if i == j { r * r } else { 2.0 * r * r };
        }
    }
    let scale = m.frob_norm().max(f64::MIN_POSITIVE);
    let residual = err.sqrt() / scale;
    if residual > TOL_EIG {
        return Err(Error::EighNonConvergence { residual });
    }

    Ok(EigenDecomposition { values, vectors })
}

/// Lower-triangular Cholesky factor L with L Lᵀ = M, plus the log-determinant
/// of M it implies.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    d: usize,
    // same packed lower-triangle layout as SymMatrix
    tri: Vec<f64>,
    logdet: f64,
}

pub fn cholesky(m: &SymMatrix) -> Result<CholeskyFactor> {
    let d = m.dim();
    let mut tri = vec![0.0; d * (d + 1) / 2];
    let mut logdet = 0.0;
    for i in 0..d {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= tri[SymMatrix::idx(i, k)] * tri[SymMatrix::idx(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                let l = s.sqrt();
                tri[SymMatrix::idx(i, i)] = l;
                logdet += 2.0 * l.ln();
            } else {
                tri[SymMatrix::idx(i, j)] = s / tri[SymMatrix::idx(j, j)];
            }
        }
    }
    Ok(CholeskyFactor { d, tri, logdet })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// log det(M) = 2 Σ log L[i][i]
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// In-place forward solve L y = b.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.d);
        for i in 0..self.d {
            let mut s = b[i];
            let row = SymMatrix::idx(i, 0);
            for k in 0..i {
                s -= self.tri[row + k] * b[k];
            }
            b[i] = s / self.tri[row + i];
        }
    }

    /// In-place backward solve Lᵀ y = b.
    pub fn solve_lower_t_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.d);
        for i in (0..self.d).rev() {
            let mut s = b[i];
            for k in (i + 1)..self.d {
                s -= self.tri[SymMatrix::idx(k, i)] * b[k];
            }
            b[i] = s / self.tri[SymMatrix::idx(i, i)];
        }
    }

    /// Full solve M y = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        self.solve_lower_in_place(&mut y);
        self.solve_lower_t_in_place(&mut y);
        y
    }

    /// tr(M⁻¹) = ||L⁻¹||_F², via forward solves of the unit vectors.
    pub fn inv_trace(&self) -> f64 {
        let mut total = 0.0;
        let mut col = vec![0.0; self.d];
        for j in 0..self.d {
            col[..j].iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            for i in (j + 1)..self.d {
                col[i] = 0.0;
            }
            self.solve_lower_in_place(&mut col);
            total += col[j..].iter().map(|v| v * v).sum::<f64>();
        }
        total
    }
}

/// xᵀ M⁻¹ x through the Cholesky factor of M: one forward solve, O(d²).
pub fn quad_form(x: &[f64], chol: &CholeskyFactor) -> Result<f64> {
    if x.len() != chol.d {
        return Err(Error::DimensionMismatch { expected: chol.d, got: x.len() });
    }
    let mut y = x.to_vec();
    chol.solve_lower_in_place(&mut y);
    Ok(y.iter().map(|v| v * v).sum())
}
