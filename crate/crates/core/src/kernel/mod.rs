//! Kernel functions, the implicit `Q` operator and low-rank kernel surrogates.

mod cache;
mod nystrom;
mod operator;
mod rff;

pub use nystrom::{nystrom_build, NystromFactor, NYSTROM_RIDGE};
pub use operator::{q_matvec, q_submatrix, DenseQ, KernelOperator, QOperator, DEFAULT_CACHE_BUDGET};
pub use rff::{rff_build, RffMap};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

/// A kernel choice. For RBF, `K(x, y) = exp(-|x - y|^2 / (2 alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub alpha: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            alpha: 1.0,
        }
    }

    pub fn rbf(alpha: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Rbf && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return input(format!("RBF width must be positive, got {}", self.alpha));
        }
        Ok(())
    }

    /// Kernel value from a precomputed inner product and squared norms.
    #[inline]
    pub(crate) fn from_parts(&self, inner: f64, sq_i: f64, sq_j: f64) -> f64 {
        match self.kind {
            KernelKind::Linear => inner,
            KernelKind::Rbf => {
                let d2 = (sq_i + sq_j - 2.0 * inner).max(0.0);
                (-d2 / (2.0 * self.alpha)).exp()
            }
        }
    }
}

/// Evaluates `K(xi, xj)`.
pub fn kernel_eval(spec: &KernelSpec, xi: &[f64], xj: &[f64]) -> Result<f64> {
    if xi.len() != xj.len() {
        return input(format!(
            "kernel arguments differ in length ({} vs {})",
            xi.len(),
            xj.len()
        ));
    }
    spec.validate()?;
    let inner = crate::vecops::dot(xi, xj);
    let sq_i = crate::vecops::norm_sq(xi);
    let sq_j = crate::vecops::norm_sq(xj);
    Ok(spec.from_parts(inner, sq_i, sq_j))
}

/// Dense row-major sample matrix with cached squared row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n: usize,
    q: usize,
    data: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl Samples {
    pub fn new(n: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * q {
            return Err(Error::Input(format!(
                "sample buffer has {} entries, expected {}x{}",
                data.len(),
                n,
                q
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return input("sample matrix contains non-finite values");
        }
        let mut s = Samples {
            n,
            q,
            data,
            sq_norms: Vec::new(),
        };
        s.refresh_norms();
        Ok(s)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != q) {
            return input("rows have differing lengths");
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Samples::new(rows.len(), q, data)
    }

    fn refresh_norms(&mut self) {
        self.sq_norms = (0..self.n)
            .map(|i| crate::vecops::norm_sq(self.row(i)))
            .collect();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.q..(i + 1) * self.q]
    }

    #[inline]
    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    pub fn select(&self, idx: &[usize]) -> Samples {
        let mut data = Vec::with_capacity(idx.len() * self.q);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let sq_norms = idx.iter().map(|&i| self.sq_norms[i]).collect();
        Samples {
            n: idx.len(),
            q: self.q,
            data,
            sq_norms,
        }
    }

    #[inline]
    pub fn kernel(&self, spec: &KernelSpec, i: usize, j: usize) -> f64 {
        let inner = crate::vecops::dot(self.row(i), self.row(j));
        spec.from_parts(inner, self.sq_norms[i], self.sq_norms[j])
    }

    /// `K(x_i, x)` for an external point `x` with squared norm `sq_x`.
    #[inline]
    pub fn kernel_with(&self, spec: &KernelSpec, i: usize, x: &[f64], sq_x: f64) -> f64 {
        let inner = crate::vecops::dot(self.row(i), x);
        spec.from_parts(inner, self.sq_norms[i], sq_x)
    }
}
