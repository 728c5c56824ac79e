use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Dense rows are preferred while n·d stays under this many stored values
/// (32 MB of f64); beyond that, coordinate input is kept as CSR.
pub const DEFAULT_DENSE_BUDGET: usize = 4_000_000;

#[derive(Clone, Debug)]
enum Storage {
    Dense(Vec<f64>), // row-major n×d
    Csr { indptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64> },
}

/// Row-indexed input matrix. Zero rows are dropped at construction (they
/// carry no probability mass anywhere in the library) and `index_map`
/// remembers each retained row's original position.
#[derive(Clone, Debug)]
pub struct RowMatrix {
    n: usize,
    d: usize,
    nnz: usize,
    storage: Storage,
    index_map: Vec<usize>,
    original_n: usize,
}

/// Borrowed view of one row.
#[derive(Clone, Copy)]
pub enum RowRef<'a> {
    Dense(&'a [f64]),
    Sparse { cols: &'a [usize], vals: &'a [f64] },
}

impl<'a> RowRef<'a> {
    pub fn norm_sq(&self) -> f64 {
        match self {
            RowRef::Dense(r) => r.iter().map(|v| v * v).sum(),
            RowRef::Sparse { vals, .. } => vals.iter().map(|v| v * v).sum(),
        }
    }

    pub fn dot_dense(&self, v: &[f64]) -> f64 {
        match self {
            RowRef::Dense(r) => r.iter().zip(v).map(|(a, b)| a * b).sum(),
            RowRef::Sparse { cols, vals } => {
                cols.iter().zip(vals.iter()).map(|(&j, &x)| x * v[j]).sum()
            }
        }
    }

    /// Iterate stored entries as (column, value). Dense rows yield every
    /// column, zeros included.
    pub fn iter(&self) -> RowIter<'a> {
        match *self {
            RowRef::Dense(r) => RowIter::Dense(r.iter().enumerate()),
            RowRef::Sparse { cols, vals } => RowIter::Sparse(cols.iter().zip(vals.iter())),
        }
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        match *self {
            RowRef::Dense(r) => r.to_vec(),
            RowRef::Sparse { cols, vals } => {
                let mut out = vec![0.0; d];
                for (&j, &v) in cols.iter().zip(vals.iter()) {
                    out[j] = v;
                }
                out
            }
        }
    }
}

pub enum RowIter<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
}

impl<'a> Iterator for RowIter<'a> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense(it) => it.next().map(|(j, &v)| (j, v)),
            RowIter::Sparse(it) => it.next().map(|(&j, &v)| (j, v)),
        }
    }
}

impl RowMatrix {
    /// Dense constructor; rows of unequal length or non-finite entries are
    /// rejected, zero rows filtered.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let original_n = rows.len();
        if original_n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("rows must have at least one column".into()));
        }
        let mut data = Vec::new();
        let mut index_map = Vec::new();
        let mut nnz = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite entry in row {i}")));
            }
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            nnz += row.iter().filter(|&&v| v != 0.0).count();
            data.extend_from_slice(row);
            index_map.push(i);
        }
        if index_map.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(RowMatrix {
            n: index_map.len(),
            d,
            nnz,
            storage: Storage::Dense(data),
            index_map,
            original_n,
        })
    }

    /// Coordinate constructor. Duplicate (row, col) entries are summed;
    /// storage is dense when n·d fits the default budget, CSR otherwise.
    pub fn from_triplets(n: usize, d: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        Self::from_triplets_with_budget(n, d, triplets, DEFAULT_DENSE_BUDGET)
    }

    pub fn from_triplets_with_budget(
        n: usize,
        d: usize,
        triplets: &[(usize, usize, f64)],
        dense_budget: usize,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyMatrix);
        }
        for &(i, j, v) in triplets {
            if i >= n || j >= d {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i}, {j}) outside {n}×{d} shape"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite entry at ({i}, {j})")));
            }
        }

        if n.saturating_mul(d) <= dense_budget {
            let mut rows = vec![vec![0.0; d]; n];
            for &(i, j, v) in triplets {
                rows[i][j] += v;
            }
            return Self::from_rows(rows);
        }

        // bucket by row, then merge duplicate columns within each row
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            per_row[i].push((j, v));
        }
        let mut indptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut index_map = Vec::new();
        for (i, mut entries) in per_row.into_iter().enumerate() {
            entries.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (j, v) in entries {
                match merged.last_mut() {
                    Some((jj, vv)) if *jj == j => *vv += v,
                    _ => merged.push((j, v)),
                }
            }
            merged.retain(|&(_, v)| v != 0.0);
            if merged.is_empty() {
                continue;
            }
            for (j, v) in merged {
                cols.push(j);
                vals.push(v);
            }
            indptr.push(cols.len());
            index_map.push(i);
        }
        if index_map.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(RowMatrix {
            n: index_map.len(),
            d,
            nnz: vals.len(),
            storage: Storage::Csr { indptr, cols, vals },
            index_map,
            original_n: n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Row count before zero-row filtering.
    pub fn original_n(&self) -> usize {
        self.original_n
    }

    /// Retained row index -> original row index.
    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn row(&self, i: usize) -> RowRef<'_> {
        assert!(i < self.n, "row {i} out of bounds (n = {})", self.n);
        match &self.storage {
            Storage::Dense(data) => RowRef::Dense(&data[i * self.d..(i + 1) * self.d]),
            Storage::Csr { indptr, cols, vals } => RowRef::Sparse {
                cols: &cols[indptr[i]..indptr[i + 1]],
                vals: &vals[indptr[i]..indptr[i + 1]],
            },
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).norm_sq()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        self.row(i).to_dense(self.d)
    }

    /// XᵀX, PSD by construction.
    pub fn gram(&self) -> SymMatrix {
        let mut g = SymMatrix::zeros(self.d);
        for i in 0..self.n {
            match self.row(i) {
                RowRef::Dense(r) => g.add_outer(r, 1.0),
                RowRef::Sparse { cols, vals } => g.add_outer_sparse(cols, vals, 1.0),
            }
        }
        g
    }

    /// The retained rows as dense vectors (small instances only).
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.dense_row(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rows_are_filtered_with_index_map() {
        let x = RowMatrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 2.0],
        ])
        .unwrap();
        assert_eq!(x.n(), 2);
        assert_eq!(x.original_n(), 3);
        assert_eq!(x.index_map(), &[0, 2]);
        assert_eq!(x.nnz(), 2);
        assert!(x.row_norm_sq(0) > 0.0 && x.row_norm_sq(1) > 0.0);
    }

    #[test]
    fn all_zero_matrix_is_an_error() {
        assert!(matches!(
            RowMatrix::from_rows(vec![vec![0.0], vec![0.0]]),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn triplets_merge_duplicates_and_pick_csr_over_budget() {
        let trip = [(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (2, 0, 0.5), (2, 1, -0.5)];
        let x = RowMatrix::from_triplets_with_budget(3, 2, &trip, 1).unwrap();
        assert!(!x.is_dense());
        assert_eq!(x.nnz(), 4);
        assert_eq!(x.dense_row(0), vec![3.0, 0.0]);
        assert_eq!(x.dense_row(2), vec![0.5, -0.5]);

        let dense = RowMatrix::from_triplets(3, 2, &trip).unwrap();
        assert!(dense.is_dense());
        assert_eq!(dense.dense_row(0), vec![3.0, 0.0]);
    }

    #[test]
    fn csr_zero_row_filtering() {
        // row 1 has entries cancelling to an explicit zero, row 2 none at all
        let trip = [(0, 0, 1.0), (1, 0, 1.0), (1, 0, -1.0), (3, 1, 2.0)];
        let x = RowMatrix::from_triplets_with_budget(4, 2, &trip, 1).unwrap();
        assert_eq!(x.n(), 2);
        assert_eq!(x.index_map(), &[0, 3]);
    }

    #[test]
    fn gram_matches_hand_computation() {
        let x = RowMatrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let g = x.gram();
        assert_eq!(g.get(0, 0), 2.0);
        assert_eq!(g.get(1, 1), 2.0);
        assert_eq!(g.get(0, 1), 1.0);
        assert!(g.is_psd_tagged());
    }

    #[test]
    fn sparse_and_dense_rows_agree() {
        let trip = [(0, 2, 3.0), (1, 0, -1.0), (1, 2, 0.25)];
        let sparse = RowMatrix::from_triplets_with_budget(2, 3, &trip, 1).unwrap();
        let dense = RowMatrix::from_triplets(2, 3, &trip).unwrap();
        for i in 0..2 {
            assert_eq!(sparse.dense_row(i), dense.dense_row(i));
            assert_eq!(sparse.row_norm_sq(i), dense.row_norm_sq(i));
            let v = [0.5, -1.0, 2.0];
            assert_eq!(sparse.row(i).dot_dense(&v), dense.row(i).dot_dense(&v));
        }
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(RowMatrix::from_rows(vec![vec![f64::NAN]]).is_err());
        assert!(RowMatrix::from_triplets(1, 1, &[(0, 0, f64::INFINITY)]).is_err());
    }
}
