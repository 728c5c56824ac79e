//! Preprocessing: approximate leverage scores (exact or sketched), the
//! spectral approximation A, ridge scores l̃, and assembly into a
//! PreprocessedState. The sketched path runs in time proportional to
//! nnz(X)·log n plus poly(d); the exact path costs O(nd² + d³).

use nalgebra::DMatrix;
use rand::Rng;

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, eigh, quad_form, EigenDecomposition, RowMatrix, RowRef, SymMatrix};
use crate::state::PreprocessedState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Sketched,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "exact" => Ok(Mode::Exact),
            "sketched" => Ok(Mode::Sketched),
            other => Err(Error::InvalidParameter(format!(
                "mode must be 'exact' or 'sketched', got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Sketched => "sketched",
        })
    }
}

/// Probabilities for the row-sampling step, with the approximation factor
/// they guarantee: p_i ≥ (true leverage)_i / (guarantee_factor · rank).
#[derive(Clone, Debug)]
pub struct LeverageDistribution {
    pub p: Vec<f64>,
    pub guarantee_factor: f64,
}

/// Ridge scores l_i = x_iᵀ(I+A)⁻¹x_i and their sum ŝ.
#[derive(Clone, Debug)]
pub struct RidgeScores {
    pub values: Vec<f64>,
    pub sum: f64,
}

/// Sketch sizing. `None` fields resolve to the defaults: embedding rows
/// max(d²+d, 100), JL columns ⌈48·ln(max(n,10))⌉, 3 retries on a
/// rank-deficient sketch.
#[derive(Clone, Copy, Debug, Default)]
pub struct SketchParams {
    pub m_embed: Option<usize>,
    pub k_jl: Option<usize>,
    pub retries: Option<usize>,
}

impl SketchParams {
    fn m_embed_for(&self, d: usize) -> usize {
        self.m_embed.unwrap_or_else(|| (d * d + d).max(100))
    }

    fn k_jl_for(&self, n: usize) -> usize {
        self.k_jl.unwrap_or_else(|| (48.0 * (n.max(10) as f64).ln()).ceil() as usize)
    }

    fn retries(&self) -> usize {
        self.retries.unwrap_or(3)
    }
}

/// Exact leverage distribution: p_i = x_iᵀ(XᵀX)⁺x_i / rank(X).
pub fn leverage_scores_exact(x: &RowMatrix) -> Result<LeverageDistribution> {
    let gram = x.gram();
    let eig = eigh(&gram)?;
    let floor = 1e-10 * eig.values[0].max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = (0..x.d()).filter(|&k| eig.values[k] > floor).collect();
    if kept.is_empty() {
        return Err(Error::RankDeficient { msg: "XᵀX has no eigenvalue above tolerance".into() });
    }

    let mut p = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let row = x.row(i);
        let lev: f64 = kept
            .iter()
            .map(|&k| {
                let proj = row.dot_dense(&eig.vectors[k]);
                proj * proj / eig.values[k]
            })
            .sum();
        p.push(lev);
    }
    let total: f64 = p.iter().sum(); // = rank up to round-off
    for v in &mut p {
        *v /= total;
    }
    Ok(LeverageDistribution { p, guarantee_factor: 1.0 })
}

/// Sketched ½-approximate leverage distribution: count-sketch embedding,
/// thin QR of the sketch, then JL-estimated row norms of X·R⁻¹.
pub fn leverage_scores_sketched(
    x: &RowMatrix,
    params: &SketchParams,
    rng: &mut impl Rng,
) -> Result<LeverageDistribution> {
    let d = x.d();
    let mut m = params.m_embed_for(d);
    let attempts = params.retries() + 1;

    for attempt in 0..attempts {
        // count sketch: each row lands in one bucket with a random sign
        let mut sketch = vec![0.0; m * d];
        for i in 0..x.n() {
            let bucket = rng.random_range(0..m);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (j, v) in x.row(i).iter() {
                sketch[bucket * d + j] += sign * v;
            }
        }
        let qr = DMatrix::from_row_slice(m, d, &sketch).qr();
        let r = qr.r();

        let deficient = (0..d).any(|j| r[(j, j)].abs() <= 1e-12 * r[(0, 0)].abs().max(1e-300));
        if deficient {
            if attempt + 1 == attempts {
                return Err(Error::SketchRankDeficient { attempts });
            }
            m *= 2;
            continue;
        }

        // B = R⁻¹ G for a d×k sign JL matrix G; row scores are then ‖x_i B‖²
        let k = params.k_jl_for(x.n());
        let g = sign_jl(d, k, rng);
        let b = upper_solve_columns(&r, &g, d, k);

        let mut p = Vec::with_capacity(x.n());
        for i in 0..x.n() {
            p.push(row_times_dense(x.row(i), &b, k).iter().map(|v| v * v).sum::<f64>());
        }
        // a JL estimate of a nonzero vector is zero with probability zero,
        // but keep every retained row samplable regardless
        for v in &mut p {
            if *v <= 0.0 {
                *v = f64::MIN_POSITIVE;
            }
        }
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        return Ok(LeverageDistribution { p, guarantee_factor: 2.0 });
    }
    unreachable!("retry loop always returns");
}

// d×k matrix with ±1/√k entries, row-major.
fn sign_jl(d: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let scale = 1.0 / (k as f64).sqrt();
    (0..d * k).map(|_| if rng.random::<bool>() { scale } else { -scale }).collect()
}

// Solve R B = G column-by-column for upper-triangular R (from the QR above);
// G and the result are row-major d×k.
fn upper_solve_columns(r: &DMatrix<f64>, g: &[f64], d: usize, k: usize) -> Vec<f64> {
    let mut b = g.to_vec();
    for c in 0..k {
        for i in (0..d).rev() {
            let mut s = b[i * k + c];
            for j in (i + 1)..d {
                s -= r[(i, j)] * b[j * k + c];
            }
            b[i * k + c] = s / r[(i, i)];
        }
    }
    b
}

// y = xᵀ B for row-major d×k B, consuming only the row's stored entries.
fn row_times_dense(row: RowRef<'_>, b: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for (j, v) in row.iter() {
        if v == 0.0 {
            continue;
        }
        let brow = &b[j * k..j * k + k];
        for (yc, &bc) in y.iter_mut().zip(brow) {
            *yc += v * bc;
        }
    }
    y
}

/// Number of row samples needed for an η-accurate spectral approximation:
/// r(η) = ⌈8·d·ln(2d)/η²⌉.
pub fn sample_count_for_accuracy(d: usize, eta: f64) -> usize {
    (8.0 * d as f64 * (2.0 * d as f64).ln() / (eta * eta)).ceil() as usize
}

/// Monte-Carlo spectral approximation: A = (1/r)·Σ x_σ x_σᵀ/p_σ over r i.i.d.
/// index draws from p. PSD by construction.
pub fn build_a(
    x: &RowMatrix,
    p: &LeverageDistribution,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<SymMatrix> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside (0, 1)")));
    }
    if p.p.len() != x.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: p.p.len() });
    }
    let r = sample_count_for_accuracy(x.d(), eta);
    let table = AliasTable::new(&p.p)?;
    let mut a = SymMatrix::zeros(x.d());
    let inv_r = 1.0 / r as f64;
    for _ in 0..r {
        let i = table.sample(rng);
        let w = inv_r / p.p[i];
        match x.row(i) {
            RowRef::Dense(row) => a.add_outer(row, w),
            RowRef::Sparse { cols, vals } => a.add_outer_sparse(cols, vals, w),
        }
    }
    Ok(a.tag_psd())
}

/// Exact ridge scores l_i = x_iᵀ(I+A)⁻¹x_i via one Cholesky and n quadratic
/// forms.
pub fn ridge_scores_exact(x: &RowMatrix, a: &SymMatrix) -> Result<RidgeScores> {
    let chol = cholesky(&a.plus_identity())?;
    let mut values = Vec::with_capacity(x.n());
    let mut buf = vec![0.0; x.d()];
    for i in 0..x.n() {
        match x.row(i) {
            RowRef::Dense(row) => buf.copy_from_slice(row),
            RowRef::Sparse { cols, vals } => {
                buf.iter_mut().for_each(|v| *v = 0.0);
                for (&j, &v) in cols.iter().zip(vals.iter()) {
                    buf[j] = v;
                }
            }
        }
        values.push(quad_form(&buf, &chol)?);
    }
    let sum = values.iter().sum();
    Ok(RidgeScores { values, sum })
}

/// JL-sketched ridge scores: row norms of X·L⁻ᵀ·G where L Lᵀ = I+A, so each
/// estimate concentrates around the exact l_i within a factor (1 ± ½).
pub fn ridge_scores_sketched(
    x: &RowMatrix,
    a: &SymMatrix,
    params: &SketchParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let d = x.d();
    let chol = cholesky(&a.plus_identity())?;
    let k = params.k_jl_for(x.n());
    // B = L⁻ᵀ G, column by column
    let g = sign_jl(d, k, rng);
    let mut b = vec![0.0; d * k];
    let mut col = vec![0.0; d];
    for c in 0..k {
        for i in 0..d {
            col[i] = g[i * k + c];
        }
        chol.solve_lower_t_in_place(&mut col);
        for i in 0..d {
            b[i * k + c] = col[i];
        }
    }

    let mut l_tilde = Vec::with_capacity(x.n());
    let mut buf = vec![0.0; d];
    for i in 0..x.n() {
        let est: f64 = row_times_dense(x.row(i), &b, k).iter().map(|v| v * v).sum();
        if est > 0.0 {
            l_tilde.push(est);
        } else {
            // measure-zero JL cancellation: fall back to the exact score
            match x.row(i) {
                RowRef::Dense(row) => buf.copy_from_slice(row),
                RowRef::Sparse { cols, vals } => {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    for (&j, &v) in cols.iter().zip(vals.iter()) {
                        buf[j] = v;
                    }
                }
            }
            l_tilde.push(quad_form(&buf, &chol)?);
        }
    }
    Ok(l_tilde)
}

/// Spectral-accuracy constant: η(ε) = ε/(4·s̄ + 160·ln(9/ε)).
pub fn eta_for_epsilon(epsilon: f64, s_bar: f64) -> f64 {
    epsilon / (4.0 * s_bar + 160.0 * (9.0 / epsilon).ln())
}

/// Build the full sampler state.
///
/// Exact mode computes A = XᵀX and l̃ = l directly (η recorded as 0, ρ = 1).
/// Sketched mode runs two phases: a coarse A₀ at η₀ = ½ fixes the effective
/// dimension estimate s̄ (scaled by 3 to absorb the coarse phase's
/// distortion), which fixes the final accuracy η; A is then rebuilt at η and
/// l̃ is JL-sketched. When the row-sampling count r(η) exceeds the row count,
/// accumulating XᵀX exactly is both cheaper and (trivially) η-accurate, so
/// the rebuild takes that route instead.
pub fn build_state(
    x: &RowMatrix,
    epsilon: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<PreprocessedState> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    match mode {
        Mode::Exact => {
            let a = x.gram();
            let scores = ridge_scores_exact(x, &a)?;
            PreprocessedState::from_parts(a, scores.values, 0.0, x.index_map().to_vec())
        }
        Mode::Sketched => {
            let params = SketchParams::default();
            let p = leverage_scores_sketched(x, &params, rng)?;

            // phase 1: coarse spectral sketch to estimate the effective dimension
            let a0 = build_a(x, &p, 0.5, rng)?;
            let chol0 = cholesky(&a0.plus_identity())?;
            let s0 = (x.d() as f64 - chol0.inv_trace()).max(0.0);
            let s_bar = 3.0 * s0.max(1.0);
            let eta = eta_for_epsilon(epsilon, s_bar);

            // phase 2: rebuild at the final accuracy, reusing p
            let a = if sample_count_for_accuracy(x.d(), eta) >= x.n() {
                x.gram()
            } else {
                build_a(x, &p, eta, rng)?
            };
            let l_tilde = ridge_scores_sketched(x, &a, &params, rng)?;
            PreprocessedState::from_parts(a, l_tilde, eta, x.index_map().to_vec())
        }
    }
}

/// Check (1−η)·XᵀX ⪯ A ⪯ (1+η)·XᵀX by whitening A with the positive
/// eigendirections of XᵀX; costs a dense eigendecomposition, so intended for
/// verification at small scale.
pub fn spectral_sandwich_holds(x: &RowMatrix, a: &SymMatrix, eta: f64) -> Result<bool> {
    let gram = x.gram();
    let eig = eigh(&gram)?;
    let floor = 1e-10 * eig.values[0].max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = (0..x.d()).filter(|&k| eig.values[k] > floor).collect();
    let r = kept.len();
    if r == 0 {
        return Err(Error::RankDeficient { msg: "XᵀX is numerically zero".into() });
    }
    // W = V_r diag(λ^{-1/2}); M = Wᵀ A W must have spectrum in [1−η, 1+η]
    let mut m = SymMatrix::zeros(r);
    for (bi, &ki) in kept.iter().enumerate() {
        for (bj, &kj) in kept.iter().enumerate().take(bi + 1) {
            let mut s = 0.0;
            for u in 0..x.d() {
                for v in 0..x.d() {
                    s += eig.vectors[ki][u] * a.get(u, v) * eig.vectors[kj][v];
                }
            }
            let val = s / (eig.values[ki] * eig.values[kj]).sqrt();
            m.set(bi, bj, val);
        }
    }
    let spec = eigh(&m)?;
    let slack = 1e-8;
    Ok(spec.values.iter().all(|&l| l >= 1.0 - eta - slack && l <= 1.0 + eta + slack))
}

/// Binary search (over log α) for the rescaling α making the expected DPP
/// size of αX hit `target`: Σ α²λ/(1+α²λ) = target ± tol.
pub fn calibrate_scale(eig: &EigenDecomposition, target: f64, tol: f64) -> Result<f64> {
    let floor = 1e-10 * eig.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let positive: Vec<f64> = eig.values.iter().copied().filter(|&l| l > floor).collect();
    if positive.is_empty() {
        return Err(Error::TargetUnreachable { target, max_reachable: 0 });
    }
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!("target size {target} must be positive")));
    }
    // expected size approaches the positive-eigenvalue count from below
    if target >= positive.len() as f64 {
        return Err(Error::TargetUnreachable { target, max_reachable: positive.len() });
    }

    let size_at = |alpha: f64| -> f64 {
        let a2 = alpha * alpha;
        positive.iter().map(|&l| a2 * l / (1.0 + a2 * l)).sum()
    };

    let mut lo = 1.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        if size_at(lo) <= target {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..200 {
        if size_at(hi) >= target {
            break;
        }
        hi *= 2.0;
    }

    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    let mut alpha = if size_at(lo) >= target { lo } else { hi };
    for _ in 0..200 {
        let mid = ((llo + lhi) / 2.0).exp();
        let s = size_at(mid);
        alpha = mid;
        if (s - target).abs() <= tol || lhi - llo <= f64::EPSILON {
            break;
        }
        if s < target {
            llo = mid.ln();
        } else {
            lhi = mid.ln();
        }
    }
    Ok(alpha)
}
