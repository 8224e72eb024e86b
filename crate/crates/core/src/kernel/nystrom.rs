//! Nyström low-rank kernel approximation with k-means landmarks.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{KernelOperator, Samples};
use crate::error::{input, Error, Result};
use crate::vecops::dist;

/// Diagonal shift added to the landmark block before factoring.
pub const NYSTROM_RIDGE: f64 = 1e-3;

const LLOYD_ITERS: usize = 25;

#[derive(Debug, Clone)]
pub struct NystromFactor {
    pub landmark_indices: Vec<usize>,
    /// `K(x_i, x_{landmark_j})`, n×r.
    pub c_block: DMatrix<f64>,
    /// `K` restricted to landmarks, r×r.
    pub w_block: DMatrix<f64>,
    pub ridge: f64,
    /// Lower Cholesky factor of `w_block + ridge * I`.
    pub chol_lower: DMatrix<f64>,
}

impl NystromFactor {
    /// Rows `z_i` with `z_i^T z_j = K~_ij`, i.e. `C L^{-T}`.
    pub fn features(&self) -> Result<Samples> {
        let zt = self
            .chol_lower
            .solve_lower_triangular(&self.c_block.transpose())
            .ok_or_else(|| Error::Internal("singular Nyström factor".into()))?;
        let n = zt.ncols();
        let r = zt.nrows();
        let mut data = Vec::with_capacity(n * r);
        for i in 0..n {
            data.extend(zt.column(i).iter());
        }
        Samples::new(n, r, data)
    }

    /// Dense `K~`, for small problems and tests.
    pub fn approx_kernel(&self) -> Result<DMatrix<f64>> {
        let z = self.features()?;
        let n = z.n();
        Ok(DMatrix::from_fn(n, n, |i, j| crate::vecops::dot(z.row(i), z.row(j))))
    }
}

fn nearest(samples: &Samples, centers: &[Vec<f64>], i: usize) -> (usize, f64) {
    let x = samples.row(i);
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(samples: &Samples, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = samples.n();
    let mut centers = vec![samples.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            let x = samples.row(i);
            x.iter().zip(&centers[0]).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = samples.row(pick).to_vec();
        for (i, di) in d2.iter_mut().enumerate() {
            let d: f64 = samples
                .row(i)
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < *di {
                *di = d;
            }
        }
        centers.push(c);
    }
    centers
}

fn lloyd(samples: &Samples, centers: &mut [Vec<f64>]) {
    let n = samples.n();
    let q = samples.q();
    let k = centers.len();
    for _ in 0..LLOYD_ITERS {
        let assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(samples, centers, i).0)
            .collect();
        let mut sums = vec![vec![0.0; q]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(samples.row(i)) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(dist(&mean, &centers[c]));
            centers[c] = mean;
        }
        if shift == 0.0 {
            break;
        }
    }
}

/// Picks `r` distinct landmark indices by k-means on the samples.
pub(crate) fn select_landmarks(samples: &Samples, r: usize, seed: u64) -> Result<Vec<usize>> {
    let n = samples.n();
    if r == 0 || r > n {
        return input(format!("landmark count {r} must be in 1..={n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(samples, r, &mut rng);
    lloyd(samples, &mut centers);
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(r);
    for center in &centers {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..n {
            let d: f64 = samples
                .row(i)
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        if best.0 != usize::MAX && !used[best.0] {
            used[best.0] = true;
            out.push(best.0);
        }
    }
    let mut spare: Vec<usize> = (0..n).filter(|&i| !used[i]).collect();
    spare.shuffle(&mut rng);
    let mut spare = spare.into_iter();
    while out.len() < r {
        match spare.next() {
            Some(i) => out.push(i),
            None => {
                return Err(Error::Internal(
                    "ran out of samples while refilling empty clusters".into(),
                ))
            }
        }
    }
    Ok(out)
}

/// Builds the rank-`r` Nyström factor of the kernel underlying `op`
/// (labels are not folded in).
pub fn nystrom_build(op: &KernelOperator, r: usize, rng_seed: u64) -> Result<NystromFactor> {
    let samples = op.samples();
    let spec = *op.spec();
    let landmarks = select_landmarks(samples, r, rng_seed)?;
    let n = samples.n();
    let cols: Vec<Vec<f64>> = landmarks
        .par_iter()
        .map(|&j| (0..n).map(|i| samples.kernel(&spec, i, j)).collect())
        .collect();
    let c_block = DMatrix::from_fn(n, r, |i, j| cols[j][i]);
    let w_block = DMatrix::from_fn(r, r, |i, j| c_block[(landmarks[i], j)]);
    let shifted = &w_block + DMatrix::identity(r, r) * NYSTROM_RIDGE;
    let chol = nalgebra::Cholesky::new(shifted)
        .ok_or_else(|| Error::Internal("landmark kernel block is not positive definite".into()))?;
    Ok(NystromFactor {
        landmark_indices: landmarks,
        c_block,
        w_block,
        ridge: NYSTROM_RIDGE,
        chol_lower: chol.l(),
    })
}
