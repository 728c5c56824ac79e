//! Alias method (Vose's variant): O(n) build, O(1) per draw. The per-draw
//! cost is what keeps sampling n-independent, so no cumulative-scan fallback.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidParameter("alias table needs at least one weight".into()));
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!("bad weight {w} at index {i}")));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::InvalidParameter("alias table weights sum to zero".into()));
        }

        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0usize; n];
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s] = l;
            // l donates mass to top s up; what's left of l goes back on a list
            prob[l] = (prob[l] + prob[s]) - 1.0;
            if prob[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // leftovers are 1.0 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// The exact pmf the table samples from (column mass reassembled);
    /// equals weights/Σweights up to float rounding.
    pub fn implied_pmf(&self) -> Vec<f64> {
        let n = self.prob.len();
        let mut pmf = vec![0.0; n];
        for i in 0..n {
            pmf[i] += self.prob[i] / n as f64;
            pmf[self.alias[i]] += (1.0 - self.prob[i]) / n as f64;
        }
        pmf
    }
}
