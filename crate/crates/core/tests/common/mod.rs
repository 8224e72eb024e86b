//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ssnal::kernel::{DenseQ, KernelSpec, Samples};
use ssnal::projection::{ActiveSetMask, BoxLineSet};
use ssnal::ssnal::QpProblem;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// `G^T G` with `G` of shape `m x n`; rank-deficient when `m < n`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, n, |_, _| normal(rng));
    let q = g.transpose() * g;
    // exact symmetry
    DMatrix::from_fn(n, n, |i, j| if i <= j { q[(i, j)] } else { q[(j, i)] })
}

/// Random box/hyperplane set with a guaranteed interior point.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize) -> BoxLineSet {
    let a: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            2 => -1.0,
            _ => normal(rng),
        })
        .collect();
    let l: Vec<f64> = (0..n).map(|_| -rng.random_range(0.0..2.0)).collect();
    let u: Vec<f64> = l.iter().map(|li| li + rng.random_range(0.05..3.0)).collect();
    let xf: Vec<f64> = (0..n).map(|i| rng.random_range(l[i]..u[i])).collect();
    let d = a.iter().zip(&xf).map(|(p, q)| p * q).sum();
    BoxLineSet::new(a, d, l, u).unwrap()
}

pub struct RandomQp {
    pub q: DMatrix<f64>,
    pub problem: QpProblem,
}

pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, rank_deficient: bool) -> RandomQp {
    let m = if rank_deficient { (n / 2).max(1) } else { n + 2 };
    let q = random_psd(rng, n, m);
    let c: Vec<f64> = normal_vec(rng, n).into_iter().map(|v| 2.0 * v).collect();
    let set = random_set(rng, n);
    let op = Arc::new(DenseQ::new(q.clone()).unwrap());
    let problem = QpProblem::new(op, c, set).unwrap();
    RandomQp { q, problem }
}

/// Projection by bisection on the multiplier, in plain arithmetic with many
/// more iterations than bits of precision.
pub fn bisection_projection(v: &[f64], set: &BoxLineSet) -> Vec<f64> {
    let (a, l, u, d) = (set.a(), set.l(), set.u(), set.d());
    let n = v.len();
    let at = |lam: f64| -> Vec<f64> {
        (0..n).map(|i| (v[i] - lam * a[i]).clamp(l[i], u[i])).collect()
    };
    let h = |lam: f64| -> f64 { at(lam).iter().zip(a).map(|(x, ai)| x * ai).sum::<f64>() - d };
    if a.iter().all(|&ai| ai == 0.0) {
        return at(0.0);
    }
    // h is non-increasing
    let mut lo = -1.0;
    while h(lo) < 0.0 {
        lo *= 2.0;
    }
    let mut hi = 1.0;
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // x is affine in lambda between kinks; interpolate the last bracket
    let (xl, xh) = (at(lo), at(hi));
    let (hl, hh) = (h(lo), h(hi));
    if hl == hh {
        return xl;
    }
    let t = hl / (hl - hh);
    xl.iter().zip(&xh).map(|(p, q)| p + t * (q - p)).collect()
}

/// The projector onto `{h : h_i = 0 for active i, a^T h = 0}` built with a
/// dense pseudo-inverse.
pub fn dense_p0(mask: &ActiveSetMask, a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let active: Vec<usize> = (0..n).filter(|&i| mask.sigma_diag[i] == 0.0).collect();
    let r = active.len();
    let mut b = DMatrix::zeros(n, r + 1);
    for (k, &i) in active.iter().enumerate() {
        b[(i, k)] = 1.0;
    }
    for i in 0..n {
        b[(i, r)] = a[i];
    }
    let gram = b.transpose() * &b;
    let pinv = gram.pseudo_inverse(1e-12).unwrap();
    DMatrix::identity(n, n) - &b * pinv * b.transpose()
}

pub fn dense_p(mask: &ActiveSetMask, a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |_, _| 0.0).map_with_location(|i, j, _| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ssnal::projection::hs_jacobian_apply(mask, a, &e)[i]
    })
}

/// Minimum-norm solution of `(Q + sigma Q P Q) d = -g`, returning `(Q d, d^T Q d)`.
pub fn dense_newton(q: &DMatrix<f64>, p: &DMatrix<f64>, sigma: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let v = q + (q * p * q) * sigma;
    let v = (&v + v.transpose()) * 0.5;
    let eps = 1e-11 * v.amax().max(1.0);
    let pinv = v.pseudo_inverse(eps).unwrap();
    let d = -(pinv * DVector::from_column_slice(g));
    let qd = q * &d;
    let dqd = d.dot(&qd);
    (qd.as_slice().to_vec(), dqd)
}

pub fn dense_gram(samples: &Samples, labels: Option<&[f64]>, spec: &KernelSpec) -> DMatrix<f64> {
    let n = samples.n();
    DMatrix::from_fn(n, n, |i, j| {
        let k = ssnal::kernel::kernel_eval(spec, samples.row(i), samples.row(j)).unwrap();
        match labels {
            Some(y) => y[i] * y[j] * k,
            None => k,
        }
    })
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Two overlapping Gaussian classes in `[0,1]^q` after scaling, loosely shaped
/// like a small benchmark classification set.
pub fn synthetic_classification(seed: u64, n: usize, q: usize) -> ssnal::svm::TrainingSet {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let row: Vec<f64> = (0..q)
            .map(|j| {
                let center = if j % 2 == 0 { 0.5 + 0.12 * label } else { 0.5 - 0.05 * label };
                (center + 0.12 * normal(&mut rng)).clamp(0.0, 1.0)
            })
            .collect();
        rows.push(row);
        y.push(label);
    }
    ssnal::svm::TrainingSet::new(Samples::from_rows(&rows).unwrap(), y).unwrap()
}

/// Smooth noisy regression target on `[0,1]^q`.
pub fn synthetic_regression(seed: u64, n: usize, q: usize) -> ssnal::svm::TrainingSet {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = (3.0 * row[0]).sin() * 0.3 + 0.4 * row[1 % q] + 0.05 * normal(&mut rng);
        rows.push(row);
        y.push(t);
    }
    ssnal::svm::TrainingSet::new(Samples::from_rows(&rows).unwrap(), y).unwrap()
}
