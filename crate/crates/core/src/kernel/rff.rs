//! Random Fourier features for the RBF kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::Samples;
use crate::error::{input, Result};
use crate::vecops::dot;

/// Feature map `x -> N^{-1/2} [cos(w_1.x), sin(w_1.x), ..., cos(w_N.x), sin(w_N.x)]`
/// with `w_i ~ N(0, I / alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// N rows of length q, row-major.
    pub frequencies: Vec<f64>,
    pub q: usize,
    pub n_freq: usize,
    pub normalizer: f64,
    pub seed: u64,
}

pub fn rff_build(q: usize, n_freq: usize, alpha: f64, seed: u64) -> Result<RffMap> {
    if n_freq == 0 {
        return input("number of random features must be positive");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return input(format!("RBF width must be positive, got {alpha}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / alpha.sqrt();
    let frequencies = (0..n_freq * q)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();
    Ok(RffMap {
        frequencies,
        q,
        n_freq,
        normalizer: 1.0 / (n_freq as f64).sqrt(),
        seed,
    })
}

impl RffMap {
    pub fn frequency(&self, i: usize) -> &[f64] {
        &self.frequencies[i * self.q..(i + 1) * self.q]
    }

    pub fn feature_len(&self) -> usize {
        2 * self.n_freq
    }

    pub fn feature(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.q {
            return input(format!(
                "point has {} features, map expects {}",
                x.len(),
                self.q
            ));
        }
        let mut out = Vec::with_capacity(2 * self.n_freq);
        for i in 0..self.n_freq {
            let t = dot(self.frequency(i), x);
            out.push(self.normalizer * t.cos());
            out.push(self.normalizer * t.sin());
        }
        Ok(out)
    }

    /// Feature rows for every sample.
    pub fn features(&self, samples: &Samples) -> Result<Samples> {
        if samples.q() != self.q {
            return input(format!(
                "samples have {} features, map expects {}",
                samples.q(),
                self.q
            ));
        }
        let rows: Vec<Vec<f64>> = (0..samples.n())
            .into_par_iter()
            .map(|i| self.feature(samples.row(i)))
            .collect::<Result<_>>()?;
        let data = rows.into_iter().flatten().collect();
        Samples::new(samples.n(), 2 * self.n_freq, data)
    }
}
