//! Exact DPP sampling via the elementary-DPP mixture: Bernoulli selection of
//! eigendirections, then bottom-up volume sampling over the induced
//! orthonormal columns. Runs standalone as a baseline, and downstream as the
//! final downsampling step on the small accepted submatrix.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{EigenDecomposition, RowMatrix};

/// Eigendirection indices picked for one elementary DPP (positions into the
/// eigendecomposition's descending order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElementarySelection {
    pub indices: Vec<usize>,
}

/// n×k column-orthonormal matrix spanning the selected directions.
#[derive(Clone, Debug)]
pub struct OrthoColumns {
    n: usize,
    k: usize,
    data: Vec<f64>, // row-major n×k
}

/// Sampled row subset. Indices are sorted; the exact sampler always produces
/// distinct values, but the container is a multiset because the regularized
/// path reports duplicate source rows separately.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DppSubset {
    pub indices: Vec<usize>,
}

impl OrthoColumns {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// ‖VᵀV − I‖_F, for orthonormality checks.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut err = 0.0;
        for a in 0..self.k {
            for b in 0..=a {
                let mut dot = 0.0;
                for i in 0..self.n {
                    let row = self.row(i);
                    dot += row[a] * row[b];
                }
                let want = if a == b { 1.0 } else { 0.0 };
                let r = dot - want;
                err += if a == b { r * r } else { 2.0 * r * r };
            }
        }
        err.sqrt()
    }
}

/// Pick each eigendirection independently with probability λ/(1+λ).
/// Directions with eigenvalue at or below the round-off floor never enter.
pub fn elementary_indices(eig: &EigenDecomposition, rng: &mut impl Rng) -> ElementarySelection {
    let floor = eigen_floor(eig);
    let mut indices = Vec::new();
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam <= floor {
            continue;
        }
        if rng.random::<f64>() < lam / (1.0 + lam) {
            indices.push(i);
        }
    }
    ElementarySelection { indices }
}

fn eigen_floor(eig: &EigenDecomposition) -> f64 {
    1e-10 * eig.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE)
}

/// Columns v_j = X v̂_{t_j} / √λ_{t_j} for the selected directions; these are
/// orthonormal because the v̂ are eigenvectors of XᵀX.
pub fn build_ortho_columns(
    x: &RowMatrix,
    eig: &EigenDecomposition,
    sel: &ElementarySelection,
) -> Result<OrthoColumns> {
    if sel.indices.is_empty() {
        return Err(Error::InvalidParameter("empty eigendirection selection".into()));
    }
    let floor = eigen_floor(eig);
    let n = x.n();
    let k = sel.indices.len();
    let mut data = vec![0.0; n * k];
    for (j, &t) in sel.indices.iter().enumerate() {
        let lam = eig.values[t];
        if lam <= floor {
            return Err(Error::DegenerateDirection { index: t, value: lam });
        }
        let inv_sqrt = 1.0 / lam.sqrt();
        let vhat = &eig.vectors[t];
        for i in 0..n {
            data[i * k + j] = x.row(i).dot_dense(vhat) * inv_sqrt;
        }
    }
    Ok(OrthoColumns { n, k, data })
}

/// Volume sampling over orthonormal columns: exactly k picks, each from the
/// residual row-norm² distribution, followed by projection of every row off
/// the picked direction. Returns positions into V's rows (0-based), sorted.
pub fn volume_sample_bottom_up(v: &OrthoColumns, rng: &mut impl Rng) -> Result<DppSubset> {
    let (n, k) = (v.n, v.k);
    let mut work = v.data.clone();
    let mut norms: Vec<f64> = (0..n).map(|i| v.row(i).iter().map(|x| x * x).sum()).collect();
    let tol = 1e-10 * norms.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);

    let recompute = |work: &[f64], norms: &mut [f64]| {
        for i in 0..n {
            norms[i] = work[i * k..(i + 1) * k].iter().map(|x| x * x).sum();
        }
    };

    let mut picked = Vec::with_capacity(k);
    let mut pick_buf = vec![0.0; k];
    for t in 0..k {
        // incremental norms drift as picks accumulate; refresh them once the
        // count of updates reaches the column count, and whenever the mass
        // looks collapsed before declaring failure
        if t == k - 1 && k > 1 {
            recompute(&work, &mut norms);
        }
        let mut total: f64 = norms.iter().sum();
        if total <= tol {
            recompute(&work, &mut norms);
            total = norms.iter().sum();
            if total <= tol {
                return Err(Error::RankCollapse { picked: t, wanted: k });
            }
        }

        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = n - 1;
        for (i, &w) in norms.iter().enumerate() {
            acc += w;
            if target < acc {
                choice = i;
                break;
            }
        }

        pick_buf.copy_from_slice(&work[choice * k..(choice + 1) * k]);
        let nv: f64 = pick_buf.iter().map(|x| x * x).sum();
        picked.push(choice);

        // project every row off the picked direction and shrink its norm by
        // the removed component: norm² ← norm² − (row·v)²/‖v‖²
        for i in 0..n {
            let row = &mut work[i * k..(i + 1) * k];
            let c = row.iter().zip(&pick_buf).map(|(a, b)| a * b).sum::<f64>() / nv;
            for (r, &p) in row.iter_mut().zip(&pick_buf) {
                *r -= c * p;
            }
            norms[i] = (norms[i] - c * c * nv).max(0.0);
        }
        norms[choice] = 0.0;
        for x in &mut work[choice * k..(choice + 1) * k] {
            *x = 0.0;
        }
    }

    picked.sort_unstable();
    Ok(DppSubset { indices: picked })
}

/// Draw S ∼ DPP(X) given the eigendecomposition of XᵀX. Output indices are in
/// the original row numbering (zero rows that were filtered keep their gaps).
pub fn sample_dpp_exact(
    x: &RowMatrix,
    eig: &EigenDecomposition,
    rng: &mut impl Rng,
) -> Result<DppSubset> {
    let sel = elementary_indices(eig, rng);
    if sel.indices.is_empty() {
        return Ok(DppSubset { indices: Vec::new() });
    }
    let v = build_ortho_columns(x, eig, &sel)?;
    let positions = volume_sample_bottom_up(&v, rng)?;
    let mut indices: Vec<usize> =
        positions.indices.iter().map(|&i| x.index_map()[i]).collect();
    indices.sort_unstable();
    Ok(DppSubset { indices })
}

/// E|S| = Σ λ/(1+λ).
pub fn expected_size(eig: &EigenDecomposition) -> f64 {
    eig.values.iter().map(|&l| {
        let l = l.max(0.0);
        l / (1.0 + l)
    }).sum()
}
