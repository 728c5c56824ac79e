//! The regularized-DPP rejection sampler: Poisson-sized i.i.d. proposals from
//! the l̃ table (inner-corrected to the exact ridge scores), a log-space
//! Bernoulli acceptance whose bound is a proven inequality, and exact DPP
//! downsampling of the accepted scaled submatrix. Per-draw cost after
//! preprocessing is O(K·d² + d³), independent of n.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{sample_dpp_exact, DppSubset};
use crate::linalg::{cholesky, eigh, quad_form, RowMatrix, SymMatrix};
use crate::poisson::sample_poisson;
use crate::preprocess::ridge_scores_exact;
use crate::state::PreprocessedState;

/// Outer-iteration guard. Acceptance is provably ≥ 1/6 when A approximates
/// XᵀX well, so hitting this means the state is bad and must fail loudly.
pub const MAX_OUTER_DEFAULT: usize = 1000;

/// One accepted proposal sequence.
#[derive(Clone, Debug)]
pub struct RdppDraw {
    /// Accepted index sequence (retained-row numbering, repeats allowed,
    /// order kept).
    pub sigma: Vec<usize>,
    /// The accepted Poisson draw; equals sigma.len().
    pub k: usize,
    /// Repeat-loop iterations until acceptance (≥ 1).
    pub outer_iters: usize,
    /// Total inner-loop rejections across all proposal draws.
    pub inner_rejections: usize,
}

/// Rows x̃_σ_t = √(s̃/(l_σ_t·(q−s̃)))·x_σ_t for an accepted sequence.
#[derive(Clone, Debug)]
pub struct ScaledSubmatrix {
    pub rows: Vec<Vec<f64>>,
    pub source_indices: Vec<usize>,
}

/// A full draw with stage timings (nanoseconds).
#[derive(Clone, Debug)]
pub struct TimedDraw {
    pub draw: RdppDraw,
    pub subset: DppSubset,
    pub rdpp_ns: u64,
    pub downsample_ns: u64,
}

#[derive(Clone, Debug)]
pub struct SamplerDiagnostics {
    pub draws: usize,
    /// accepted / attempted outer iterations
    pub acceptance_rate: f64,
    pub mean_k: f64,
    /// √(s̃/ŝ) with ŝ from exact ridge scores (the rescaling the output
    /// distribution actually follows).
    pub rho: Option<f64>,
    /// tr(ρ²XᵀX(I+ρ²XᵀX)⁻¹), the mean output size the draw distribution implies.
    pub predicted_expected_size: Option<f64>,
    pub mean_rdpp_us: f64,
    pub mean_downsample_us: f64,
}

// l_i = x_iᵀ(I+A)⁻¹x_i, memoized per outer iteration: the same quadratic
// form feeds both the inner Bernoulli and the row scaling.
fn exact_l(
    state: &PreprocessedState,
    x: &RowMatrix,
    i: usize,
    cache: &mut HashMap<usize, f64>,
) -> Result<f64> {
    if let Some(&l) = cache.get(&i) {
        return Ok(l);
    }
    let row = x.dense_row(i);
    let l = quad_form(&row, state.chol_iplusa())?;
    cache.insert(i, l);
    Ok(l)
}

fn sample_index_cached(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
    cache: &mut HashMap<usize, f64>,
) -> Result<(usize, usize)> {
    let mut rejections = 0;
    loop {
        let i = state.sample_proposal_index(rng);
        let l = exact_l(state, x, i, cache)?;
        let ratio = l / (2.0 * state.l_tilde()[i]);
        // under the (½ ≤ l̃/l ≤ 3/2) contract this ratio lives in [1/3, 1];
        // either overshoot means the stored l̃ does not belong to this matrix
        if ratio > 1.0 + 1e-9 || ratio < 1.0 / 3.0 - 1e-9 {
            return Err(Error::CorruptState(format!(
                "inner acceptance l/(2l̃) = {ratio:.6e} for row {i} lies outside [1/3, 1]; \
                 the stored l̃ violates its approximation guarantee"
            )));
        }
        if rng.random::<f64>() < ratio {
            return Ok((i, rejections));
        }
        rejections += 1;
    }
}

/// Draw one index distributed exactly ∝ l_i by rejection against the l̃
/// table. Returns (index, rejection count); each trial costs one O(d²)
/// quadratic form.
pub fn sample_index_exact_l(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    let mut cache = HashMap::new();
    sample_index_cached(state, x, rng, &mut cache)
}

/// log of the acceptance probability for an accepted-candidate submatrix:
/// logdet(I + X̃_σᵀX̃_σ) − logdet(I+A) − (K+d)·log(q/(q−s̃)) + s̃.
/// Provably ≤ 0; a positive value (beyond round-off) is an internal error.
pub fn acceptance_log_prob(state: &PreprocessedState, sub: &ScaledSubmatrix) -> Result<f64> {
    let d = state.d();
    let s = state.s_tilde();
    if s <= 0.0 {
        return Err(Error::InvalidParameter(
            "acceptance ratio undefined for a state with s̃ = 0 (A is numerically zero)".into(),
        ));
    }
    let q = state.q() as f64;
    let mut gram = SymMatrix::zeros(d);
    for row in &sub.rows {
        gram.add_outer(row, 1.0);
    }
    let chol = cholesky(&gram.plus_identity())?;
    let k = sub.rows.len() as f64;
    let value =
        chol.logdet() - state.logdet_iplusa() - (k + d as f64) * (q / (q - s)).ln() + s;
    if value > 1e-9 {
        return Err(Error::AcceptanceBoundViolated { value });
    }
    Ok(value)
}

/// Run the rejection loop to acceptance, returning the draw and its scaled
/// submatrix (the latter is what downsampling consumes).
pub fn sample_rdpp_scaled(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
) -> Result<(RdppDraw, ScaledSubmatrix)> {
    if x.n() != state.n() || x.d() != state.d() {
        return Err(Error::DimensionMismatch { expected: state.n(), got: x.n() });
    }
    let s = state.s_tilde();
    if s <= 0.0 {
        return Err(Error::InvalidParameter(
            "state has s̃ = 0 (A is numerically zero); nothing to sample".into(),
        ));
    }
    let q = state.q() as f64;
    let scale_base = s / (q - s);

    let mut k_total = 0usize;
    let mut inner_total = 0usize;
    let mut cache = HashMap::new();
    for outer in 1..=MAX_OUTER_DEFAULT {
        let k = sample_poisson(q, rng) as usize;
        k_total += k;
        cache.clear();

        let mut sigma = Vec::with_capacity(k);
        for _ in 0..k {
            let (i, rej) = sample_index_cached(state, x, rng, &mut cache)?;
            inner_total += rej;
            sigma.push(i);
        }
        let mut rows = Vec::with_capacity(k);
        for &i in &sigma {
            let l = cache[&i];
            let c = (scale_base / l).sqrt();
            let mut row = x.dense_row(i);
            for v in &mut row {
                *v *= c;
            }
            rows.push(row);
        }
        let sub = ScaledSubmatrix { rows, source_indices: sigma.clone() };

        let alp = acceptance_log_prob(state, &sub)?;
        // u ∈ (0,1], accept iff log(u) < alp — never underflows
        let u = 1.0 - rng.random::<f64>();
        if u.ln() < alp {
            return Ok((
                RdppDraw { sigma, k, outer_iters: outer, inner_rejections: inner_total },
                sub,
            ));
        }
    }
    Err(Error::MaxOuterExceeded {
        max_outer: MAX_OUTER_DEFAULT,
        s_tilde: s,
        q: state.q(),
        mean_k: k_total as f64 / MAX_OUTER_DEFAULT as f64,
    })
}

/// Accepted proposal sequence only (no downsampling).
pub fn sample_rdpp(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
) -> Result<RdppDraw> {
    Ok(sample_rdpp_scaled(state, x, rng)?.0)
}

/// Full pipeline draw with stage timings.
pub fn sample_dpp_timed(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
) -> Result<TimedDraw> {
    let t0 = Instant::now();
    let (draw, sub) = sample_rdpp_scaled(state, x, rng)?;
    let rdpp_ns = t0.elapsed().as_nanos() as u64;

    let t1 = Instant::now();
    let subset = if draw.k == 0 {
        DppSubset { indices: Vec::new() }
    } else {
        let xs = RowMatrix::from_rows(sub.rows)?;
        debug_assert_eq!(xs.n(), draw.k, "scaled rows must all be nonzero");
        let eig = eigh(&xs.gram())?;
        let positions = sample_dpp_exact(&xs, &eig, rng)?;
        // positions index the σ sequence; report original row numbers, as a
        // sorted multiset (distinct positions may carry equal rows)
        let mut indices: Vec<usize> = positions
            .indices
            .iter()
            .map(|&pos| state.index_map()[draw.sigma[pos]])
            .collect();
        indices.sort_unstable();
        DppSubset { indices }
    };
    let downsample_ns = t1.elapsed().as_nanos() as u64;

    Ok(TimedDraw { draw, subset, rdpp_ns, downsample_ns })
}

/// Draw S̃ from the target subset distribution (original row numbering).
pub fn sample_dpp(
    state: &PreprocessedState,
    x: &RowMatrix,
    rng: &mut impl Rng,
) -> Result<DppSubset> {
    Ok(sample_dpp_timed(state, x, rng)?.subset)
}

/// Aggregate statistics over completed draws, plus the exact-score
/// diagnostics ρ and the expected output size it predicts.
pub fn diagnostics(
    state: &PreprocessedState,
    x: &RowMatrix,
    draws: &[TimedDraw],
) -> Result<SamplerDiagnostics> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("diagnostics need at least one draw".into()));
    }
    let n = draws.len() as f64;
    let outer: usize = draws.iter().map(|t| t.draw.outer_iters).sum();
    let mean_k = draws.iter().map(|t| t.draw.k).sum::<usize>() as f64 / n;
    let mean_rdpp_us = draws.iter().map(|t| t.rdpp_ns).sum::<u64>() as f64 / n / 1_000.0;
    let mean_downsample_us =
        draws.iter().map(|t| t.downsample_ns).sum::<u64>() as f64 / n / 1_000.0;

    let scores = ridge_scores_exact(x, state.a())?;
    let rho = (state.s_tilde() / scores.sum).sqrt();
    let mut scaled_gram = x.gram();
    scaled_gram.scale(rho * rho);
    let eig = eigh(&scaled_gram.tag_psd())?;
    let predicted = crate::exact::expected_size(&eig);

    Ok(SamplerDiagnostics {
        draws: draws.len(),
        acceptance_rate: draws.len() as f64 / outer as f64,
        mean_k,
        rho: Some(rho),
        predicted_expected_size: Some(predicted),
        mean_rdpp_us,
        mean_downsample_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{build_state, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_2() -> RowMatrix {
        RowMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn three_by_two() -> RowMatrix {
        RowMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap()
    }

    fn exact_state(x: &RowMatrix) -> PreprocessedState {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        build_state(x, 0.1, Mode::Exact, &mut rng).unwrap()
    }

    #[test]
    fn index_sampling_uniform_on_identity() {
        let x = identity_2();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut count0 = 0;
        for _ in 0..n {
            let (i, _) = sample_index_exact_l(&st, &x, &mut rng).unwrap();
            if i == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn index_sampling_marginal_proportional_to_l() {
        let x = three_by_two();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let (i, _) = sample_index_exact_l(&st, &x, &mut rng).unwrap();
            counts[i] += 1;
        }
        // l = (3/8, 3/8, 1/2), ŝ = 5/4
        let want = [0.3, 0.3, 0.4];
        let tv: f64 = (0..3)
            .map(|i| (counts[i] as f64 / n as f64 - want[i]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.01, "tv {tv}");
    }

    #[test]
    fn corrupt_l_tilde_is_detected_both_ways() {
        let x = three_by_two();
        let st = exact_state(&x);

        // l̃ scaled up 4×: inner ratio drops to 1/8 < 1/3
        let inflated: Vec<f64> = st.l_tilde().iter().map(|l| 4.0 * l).collect();
        let bad =
            PreprocessedState::from_parts(st.a().clone(), inflated, 0.0, st.index_map().to_vec())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            sample_index_exact_l(&bad, &x, &mut rng),
            Err(Error::CorruptState(_))
        ));

        // l̃ scaled down 4×: inner ratio hits 2 > 1
        let deflated: Vec<f64> = st.l_tilde().iter().map(|l| l / 4.0).collect();
        let bad =
            PreprocessedState::from_parts(st.a().clone(), deflated, 0.0, st.index_map().to_vec())
                .unwrap();
        assert!(matches!(
            sample_index_exact_l(&bad, &x, &mut rng),
            Err(Error::CorruptState(_))
        ));
    }

    #[test]
    fn acceptance_log_prob_hand_value_empty_sequence() {
        // X = I₂ exact state: s̃ = 1, q = 4, logdet(I+A) = log 4;
        // K = 0 gives 0 − log4 − 2·log(4/3) + 1
        let x = identity_2();
        let st = exact_state(&x);
        let sub = ScaledSubmatrix { rows: vec![], source_indices: vec![] };
        let got = acceptance_log_prob(&st, &sub).unwrap();
        let want = 1.0 - 4.0f64.ln() - 2.0 * (4.0f64 / 3.0).ln();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn acceptance_log_prob_rejects_zero_a() {
        let st = PreprocessedState::from_parts(
            SymMatrix::zeros(2).tag_psd(),
            vec![1.0, 1.0],
            0.0,
            vec![0, 1],
        )
        .unwrap();
        let sub = ScaledSubmatrix { rows: vec![], source_indices: vec![] };
        assert!(acceptance_log_prob(&st, &sub).is_err());
    }

    #[test]
    fn acceptance_rate_identity_exact_state() {
        // analytic rate for X = I₂, A = XᵀX is (1 − s̃/q)^d = (3/4)² = 0.5625,
        // comfortably above the proven 1/6 floor
        let x = identity_2();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 10_000;
        let mut outer = 0usize;
        for _ in 0..draws {
            outer += sample_rdpp(&st, &x, &mut rng).unwrap().outer_iters;
        }
        let rate = draws as f64 / outer as f64;
        assert!(rate >= 0.16, "acceptance rate {rate}");
        assert!((rate - 0.5625).abs() <= 0.02, "rate {rate} far from analytic 0.5625");
    }

    #[test]
    fn small_q_state_often_returns_empty() {
        // X = [[0.1]]: P(∅) = 1/1.01 under the target DPP
        let x = RowMatrix::from_rows(vec![vec![0.1]]).unwrap();
        let st = exact_state(&x);
        assert_eq!(st.q(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut empty = 0;
        for _ in 0..n {
            if sample_dpp(&st, &x, &mut rng).unwrap().indices.is_empty() {
                empty += 1;
            }
        }
        let want = 1.0 / 1.01;
        let freq = empty as f64 / n as f64;
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((freq - want).abs() <= 3.0 * se, "freq {freq} vs {want}");
    }

    #[test]
    fn duplicate_rows_never_drawn_together() {
        let x = RowMatrix::from_rows(vec![vec![1.0], vec![1.0]]).unwrap();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20_000 {
            let s = sample_dpp(&st, &x, &mut rng).unwrap();
            assert!(s.indices.len() <= 1, "volume-zero pair drawn: {:?}", s.indices);
        }
    }

    #[test]
    fn output_pmf_identity_is_uniform() {
        let x = identity_2();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_dpp(&st, &x, &mut rng).unwrap().indices).or_default() += 1;
        }
        let tv: f64 = counts.values().map(|&c| (c as f64 / n as f64 - 0.25).abs()).sum::<f64>()
            / 2.0;
        assert!(counts.len() == 4 && tv <= 0.02, "tv {tv} over {} subsets", counts.len());
    }

    #[test]
    fn hopeless_state_aborts_with_diagnostics() {
        // A's mass sits in a direction X never touches, so det(I+A) dwarfs
        // every achievable determinant and acceptance is ~2e-8
        let x = RowMatrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 1e-6);
        a.set(1, 1, 1e8);
        let l = 1.0 / (1.0 + 1e-6);
        let st = PreprocessedState::from_parts(a.tag_psd(), vec![l], 0.0, vec![0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        match sample_rdpp(&st, &x, &mut rng) {
            Err(Error::MaxOuterExceeded { max_outer: 1000, .. }) => {}
            other => panic!("expected outer-loop abort, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_matrix_rejected() {
        let st = exact_state(&three_by_two());
        let other = identity_2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(matches!(
            sample_rdpp(&st, &other, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diagnostics_exact_state() {
        let x = three_by_two();
        let st = exact_state(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 20_000;
        let draws: Vec<TimedDraw> =
            (0..n).map(|_| sample_dpp_timed(&st, &x, &mut rng).unwrap()).collect();
        let diag = diagnostics(&st, &x, &draws).unwrap();

        assert!((diag.rho.unwrap() - 1.0).abs() <= 1e-8);
        // XᵀX eigenvalues (3, 1): predicted size 3/4 + 1/2
        assert!((diag.predicted_expected_size.unwrap() - 1.25).abs() <= 1e-8);
        assert!(diag.acceptance_rate > 0.0 && diag.acceptance_rate <= 1.0);

        let mean_size =
            draws.iter().map(|t| t.subset.indices.len()).sum::<usize>() as f64 / n as f64;
        // Var|S| = 3/16 + 1/4
        let se = (0.4375f64 / n as f64).sqrt();
        assert!((mean_size - 1.25).abs() <= 3.0 * se, "mean size {mean_size}");
    }

    #[test]
    fn draws_are_reproducible_per_stream() {
        let x = three_by_two();
        let st = exact_state(&x);
        let a = sample_dpp(&st, &x, &mut crate::rng::stream(42, 7)).unwrap();
        let b = sample_dpp(&st, &x, &mut crate::rng::stream(42, 7)).unwrap();
        let c = sample_dpp(&st, &x, &mut crate::rng::stream(42, 8)).unwrap();
        assert_eq!(a.indices, b.indices);
        let _ = c; // different stream may or may not differ; only determinism is asserted
    }
}
