//! Poisson sampling: CDF inversion for small means, Hörmann's transformed
//! rejection (PTRS) for large ones. Hand-rolled so draw counts per RNG stream
//! stay stable across dependency upgrades.

use rand::Rng;

/// Mean at which sampling switches from inversion to transformed rejection.
const PTRS_CUTOFF: f64 = 30.0;

/// Exact Poisson(mean) draw. Panics on non-positive or non-finite mean.
pub fn sample_poisson(mean: f64, rng: &mut impl Rng) -> u64 {
    assert!(mean.is_finite() && mean > 0.0, "Poisson mean must be positive, got {mean}");
    if mean < PTRS_CUTOFF {
        inversion(mean, rng)
    } else {
        ptrs(mean, rng)
    }
}

fn inversion(mean: f64, rng: &mut impl Rng) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    // far past any mass reachable for mean < 30; guards the rounding tail
    let cap = (mean + 20.0 * mean.sqrt() + 120.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

// Transformed rejection with squeeze (Hörmann 1993), valid for mean ≥ 10.
fn ptrs(mean: f64, rng: &mut impl Rng) -> u64 {
    let log_mean = mean.ln();
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let accept_log = (v * inv_alpha / (a / (us * us) + b)).ln();
        if accept_log <= k * log_mean - mean - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

/// log(k!) — exact product for small k, Lanczos beyond.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else if k <= 20 {
        ((2..=k).product::<u64>() as f64).ln()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

// Lanczos approximation, g = 7, nine coefficients; ~1e-13 relative error for
// x ≥ 0.5 (all callers pass x ≥ 1).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x >= 0.5);
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}
