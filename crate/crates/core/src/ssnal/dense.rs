//! Dense factorizations for the Newton systems, backed by faer's blocked kernels.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn column(v: &DVector<f64>) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn back(x: &Mat<f64>) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| x[(i, 0)])
}

/// Partial-pivot LU solve. Singular systems surface as non-finite entries.
pub(crate) fn lu_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    back(&to_faer(m).partial_piv_lu().solve(column(b)))
}

/// Cholesky factor of a symmetric positive definite matrix.
pub(crate) struct Spd(faer::linalg::solvers::Llt<f64>);

impl Spd {
    pub(crate) fn factor(m: &DMatrix<f64>) -> Option<Spd> {
        to_faer(m).llt(Side::Lower).ok().map(Spd)
    }

    pub(crate) fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        back(&self.0.solve(column(b)))
    }
}
