//! The implicit `Q` operator used by the solvers.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::cache::{Column, ColumnCache};
use super::{KernelKind, KernelSpec, Samples};
use crate::error::{input, Result};
use crate::vecops::dot;

/// Default column cache size in stored scalars (about 6000 columns of 6000).
pub const DEFAULT_CACHE_BUDGET: usize = 36_000_000;

/// A symmetric positive semidefinite matrix that is only accessed through
/// products and small extracted blocks.
pub trait QOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// `out = Q v`.
    fn matvec(&self, v: &[f64], out: &mut [f64]);

    /// `out = sum_k vals[k] * Q[:, idx[k]]`, i.e. `Q v` for a vector that is
    /// nonzero only on `idx`.
    fn matvec_cols(&self, idx: &[usize], vals: &[f64], out: &mut [f64]);

    /// `Q[idx, idx]` as a dense matrix.
    fn submatrix(&self, idx: &[usize]) -> DMatrix<f64>;

    fn diagonal(&self) -> Vec<f64>;
}

fn check_indices(n: usize, idx: &[usize]) -> Result<()> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return input(format!("index {bad} out of range for dimension {n}"));
    }
    Ok(())
}

/// Checked `Q v`.
pub fn q_matvec(op: &dyn QOperator, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != op.dim() {
        return input(format!(
            "vector of length {} applied to operator of dimension {}",
            v.len(),
            op.dim()
        ));
    }
    let mut out = vec![0.0; v.len()];
    op.matvec(v, &mut out);
    Ok(out)
}

/// Checked `Q[idx, idx]`.
pub fn q_submatrix(op: &dyn QOperator, idx: &[usize]) -> Result<DMatrix<f64>> {
    check_indices(op.dim(), idx)?;
    Ok(op.submatrix(idx))
}

/// Explicit dense `Q`.
#[derive(Debug, Clone)]
pub struct DenseQ {
    m: DMatrix<f64>,
}

impl DenseQ {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return input(format!("Q must be square, got {}x{}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return input("Q contains non-finite entries");
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                    return input(format!("Q is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(DenseQ { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl QOperator for DenseQ {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        // column-major storage: column i equals row i by symmetry
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = dot(self.m.column(i).as_slice(), v);
        }
    }

    fn matvec_cols(&self, idx: &[usize], vals: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&j, &vj) in idx.iter().zip(vals) {
            crate::vecops::axpy(vj, self.m.column(j).as_slice(), out);
        }
    }

    fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.m[(idx[r], idx[c])])
    }

    fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }
}

/// `Q_ij = y_i y_j K(x_i, x_j)` (or `K(x_i, x_j)` without labels), with
/// columns computed on demand and kept in a bounded LRU cache.
#[derive(Debug)]
pub struct KernelOperator {
    samples: Arc<Samples>,
    labels: Option<Vec<f64>>,
    spec: KernelSpec,
    cache: Mutex<ColumnCache>,
    cache_budget: usize,
}

impl KernelOperator {
    pub fn new(samples: Arc<Samples>, labels: Option<Vec<f64>>, spec: KernelSpec) -> Result<Self> {
        Self::with_cache_budget(samples, labels, spec, DEFAULT_CACHE_BUDGET)
    }

    pub fn with_cache_budget(
        samples: Arc<Samples>,
        labels: Option<Vec<f64>>,
        spec: KernelSpec,
        cache_budget: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if let Some(y) = &labels {
            if y.len() != samples.n() {
                return input(format!(
                    "{} labels for {} samples",
                    y.len(),
                    samples.n()
                ));
            }
            if y.iter().any(|&v| v != 1.0 && v != -1.0) {
                return input("labels must be +1 or -1");
            }
        }
        Ok(KernelOperator {
            samples,
            labels,
            spec,
            cache: Mutex::new(ColumnCache::new(cache_budget)),
            cache_budget,
        })
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn samples_arc(&self) -> Arc<Samples> {
        self.samples.clone()
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn cache_budget(&self) -> usize {
        self.cache_budget
    }

    /// Number of scalars currently held in the column cache.
    pub fn cache_used(&self) -> usize {
        self.cache.lock().expect("kernel cache poisoned").used()
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("kernel cache poisoned").clear();
    }

    #[inline]
    fn label(&self, i: usize) -> f64 {
        self.labels.as_ref().map_or(1.0, |y| y[i])
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        let k = self.samples.kernel(&self.spec, i, j);
        match &self.labels {
            Some(y) => y[i] * y[j] * k,
            None => k,
        }
    }

    fn compute_column(&self, j: usize) -> Vec<f64> {
        (0..self.samples.n()).map(|i| self.entry(i, j)).collect()
    }

    /// Column `j` of `Q`, from the cache when available.
    pub fn column(&self, j: usize) -> Column {
        if let Some(c) = self.cache.lock().expect("kernel cache poisoned").get(j) {
            return c;
        }
        let c = Arc::new(self.compute_column(j));
        self.cache
            .lock()
            .expect("kernel cache poisoned")
            .insert(j, c.clone());
        c
    }

    /// Fetches many columns, computing the missing ones in parallel.
    fn columns(&self, idx: &[usize]) -> Vec<Column> {
        let mut found: Vec<Option<Column>> = {
            let mut cache = self.cache.lock().expect("kernel cache poisoned");
            idx.iter().map(|&j| cache.get(j)).collect()
        };
        let missing: Vec<usize> = (0..idx.len()).filter(|&k| found[k].is_none()).collect();
        if !missing.is_empty() {
            let computed: Vec<Column> = missing
                .par_iter()
                .map(|&k| Arc::new(self.compute_column(idx[k])))
                .collect();
            let mut cache = self.cache.lock().expect("kernel cache poisoned");
            for (&k, col) in missing.iter().zip(computed) {
                cache.insert(idx[k], col.clone());
                found[k] = Some(col);
            }
        }
        found.into_iter().map(|c| c.expect("column filled")).collect()
    }

    fn is_linear(&self) -> bool {
        self.spec.kind == KernelKind::Linear
    }

    /// `sum_k w_k y_{j_k} x_{j_k}` for the linear kernel shortcut.
    fn linear_combination(&self, idx: &[usize], vals: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.samples.q()];
        for (&j, &vj) in idx.iter().zip(vals) {
            let w = vj * self.label(j);
            if w != 0.0 {
                crate::vecops::axpy(w, self.samples.row(j), &mut t);
            }
        }
        t
    }

    fn linear_apply(&self, t: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = self.label(i) * dot(self.samples.row(i), t);
        });
    }
}

impl QOperator for KernelOperator {
    fn dim(&self) -> usize {
        self.samples.n()
    }

    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        if self.is_linear() {
            let idx: Vec<usize> = (0..n).collect();
            let t = self.linear_combination(&idx, v);
            self.linear_apply(&t, out);
            return;
        }
        // Q is symmetric entrywise, so row i of Q is column i.
        let idx: Vec<usize> = (0..n).collect();
        let fits = n.saturating_mul(n) <= self.cache_budget;
        if fits {
            let cols = self.columns(&idx);
            out.par_iter_mut()
                .zip(cols.par_iter())
                .for_each(|(o, c)| *o = dot(c, v));
        } else {
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                let cached = self.cache.lock().expect("kernel cache poisoned").get(i);
                *o = match cached {
                    Some(c) => dot(&c, v),
                    None => dot(&self.compute_column(i), v),
                };
            });
        }
    }

    fn matvec_cols(&self, idx: &[usize], vals: &[f64], out: &mut [f64]) {
        if self.is_linear() {
            let t = self.linear_combination(idx, vals);
            self.linear_apply(&t, out);
            return;
        }
        let keep: Vec<usize> = (0..idx.len()).filter(|&k| vals[k] != 0.0).collect();
        let cols_idx: Vec<usize> = keep.iter().map(|&k| idx[k]).collect();
        let cols = self.columns(&cols_idx);
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut s = 0.0;
            for (c, &k) in cols.iter().zip(&keep) {
                s += vals[k] * c[i];
            }
            *o = s;
        });
    }

    fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let p = idx.len();
        let snapshot: Vec<Option<Column>> = {
            let mut cache = self.cache.lock().expect("kernel cache poisoned");
            idx.iter().map(|&j| cache.get(j)).collect()
        };
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|c| match &snapshot[c] {
                Some(col) => idx.iter().map(|&i| col[i]).collect(),
                None => idx.iter().map(|&i| self.entry(i, idx[c])).collect(),
            })
            .collect();
        DMatrix::from_fn(p, p, |r, c| cols[c][r])
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }
}
