use std::sync::Arc;

use nalgebra::DMatrix;

use crate::kernel::QOperator;

/// `[[K, -K], [-K, K]]` over stacked variables `(x; z)`, applied with one
/// product by `K` per call.
pub struct SvrOperator {
    k: Arc<dyn QOperator>,
}

impl SvrOperator {
    pub fn new(k: Arc<dyn QOperator>) -> Self {
        SvrOperator { k }
    }

    fn split(&self, idx: &[usize], vals: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let n = self.k.dim();
        idx.iter()
            .zip(vals)
            .map(|(&i, &v)| if i < n { (i, v) } else { (i - n, -v) })
            .unzip()
    }

    fn fill(&self, kt: &[f64], out: &mut [f64]) {
        let n = self.k.dim();
        for i in 0..n {
            out[i] = kt[i];
            out[n + i] = -kt[i];
        }
    }
}

impl QOperator for SvrOperator {
    fn dim(&self) -> usize {
        2 * self.k.dim()
    }

    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.k.dim();
        let t: Vec<f64> = (0..n).map(|i| v[i] - v[n + i]).collect();
        let mut kt = vec![0.0; n];
        self.k.matvec(&t, &mut kt);
        self.fill(&kt, out);
    }

    fn matvec_cols(&self, idx: &[usize], vals: &[f64], out: &mut [f64]) {
        let (base, coef) = self.split(idx, vals);
        let mut kt = vec![0.0; self.k.dim()];
        self.k.matvec_cols(&base, &coef, &mut kt);
        self.fill(&kt, out);
    }

    fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.k.dim();
        let mut base: Vec<usize> = idx.iter().map(|&i| i % n).collect();
        base.sort_unstable();
        base.dedup();
        let kb = self.k.submatrix(&base);
        let pos = |i: usize| base.binary_search(&(i % n)).expect("index present");
        let sign = |i: usize| if i < n { 1.0 } else { -1.0 };
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
            sign(idx[r]) * sign(idx[c]) * kb[(pos(idx[r]), pos(idx[c]))]
        })
    }

    fn diagonal(&self) -> Vec<f64> {
        let d = self.k.diagonal();
        d.iter().chain(d.iter()).copied().collect()
    }
}
