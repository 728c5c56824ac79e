//! Seeded synthetic matrices for tests and benchmarks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::RowMatrix;

/// Dense n×d matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix(n: usize, d: usize, rng: &mut impl Rng) -> Result<RowMatrix> {
    let rows = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    RowMatrix::from_rows(rows)
}

/// Sparse triplets with `per_row` distinct nonzero columns per row, standard
/// normal values.
pub fn sparse_triplets(
    n: usize,
    d: usize,
    per_row: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize, f64)> {
    let per_row = per_row.min(d);
    let mut cols: Vec<usize> = (0..d).collect();
    let mut out = Vec::with_capacity(n * per_row);
    for i in 0..n {
        // partial Fisher-Yates: the first per_row slots become the chosen columns
        for k in 0..per_row {
            let j = rng.random_range(k..d);
            cols.swap(k, j);
        }
        for &c in &cols[..per_row] {
            out.push((i, c, StandardNormal.sample(rng)));
        }
    }
    out
}

/// Sparse n×d matrix with `per_row` nonzeros per row.
pub fn sparse_matrix(
    n: usize,
    d: usize,
    per_row: usize,
    rng: &mut impl Rng,
) -> Result<RowMatrix> {
    let trips = sparse_triplets(n, d, per_row, rng);
    RowMatrix::from_triplets(n, d, &trips)
}
