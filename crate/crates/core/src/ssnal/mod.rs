//! Semismooth Newton augmented Lagrangian solver for
//! `min 1/2 x^T Q x + c^T x  s.t.  a^T x = d, l <= x <= u`.

mod dense;
mod inner;
mod newton;
pub(crate) mod outer;
mod warm_start;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::kernel::QOperator;
use crate::projection::BoxLineSet;

pub use inner::{line_search, psi_eval, psi_grad, ssn_solve, GradientEval, InnerOutcome, LineSearchResult};
pub use newton::{newton_direction, DirectionRoute, NewtonDirection};
pub use inner::InnerStop;
pub use outer::{alm_solve, alm_solve_with_progress, kkt_residual, kkt_residual_with_qx};
pub use warm_start::warm_start_rff;

/// The unified quadratic program.
#[derive(Clone)]
pub struct QpProblem {
    q: Arc<dyn QOperator>,
    c: Vec<f64>,
    set: BoxLineSet,
}

impl std::fmt::Debug for QpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QpProblem")
            .field("n", &self.dim())
            .field("d", &self.set.d())
            .finish()
    }
}

impl QpProblem {
    pub fn new(q: Arc<dyn QOperator>, c: Vec<f64>, set: BoxLineSet) -> Result<Self> {
        let n = q.dim();
        if c.len() != n || set.dim() != n {
            return input(format!(
                "dimension mismatch: Q is {n}x{n}, c has {}, constraints have {}",
                c.len(),
                set.dim()
            ));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return input("linear term contains non-finite values");
        }
        Ok(QpProblem { q, c, set })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> &dyn QOperator {
        self.q.as_ref()
    }

    pub fn q_arc(&self) -> Arc<dyn QOperator> {
        self.q.clone()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn set(&self) -> &BoxLineSet {
        &self.set
    }

    /// Same constraints and linear term with a different operator.
    pub fn with_operator(&self, q: Arc<dyn QOperator>) -> Result<Self> {
        QpProblem::new(q, self.c.clone(), self.set.clone())
    }

    /// `1/2 x^T Q x + c^T x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; x.len()];
        self.q.matvec(x, &mut qx);
        self.objective_with_qx(x, &qx)
    }

    pub(crate) fn objective_with_qx(&self, x: &[f64], qx: &[f64]) -> f64 {
        0.5 * crate::vecops::dot(x, qx) + crate::vecops::dot(&self.c, x)
    }
}

/// A geometric sequence `scale * ratio^k`; summable for `ratio < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summable {
    pub scale: f64,
    pub ratio: f64,
}

impl Summable {
    pub fn at(&self, k: usize) -> f64 {
        self.scale * self.ratio.powi(k.min(i32::MAX as usize) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmOptions {
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    pub tol_kkt: f64,
    pub eps_seq: Summable,
    pub delta_seq: Summable,
    /// Stand-in for the smallest positive eigenvalue of `Q` in the inner
    /// stopping tests.
    pub lambda_min_surrogate: f64,
    pub max_outer: usize,
}

impl Default for AlmOptions {
    fn default() -> Self {
        AlmOptions {
            sigma0: 1.0,
            sigma_growth: 5.0,
            sigma_max: 1e8,
            tol_kkt: 1e-3,
            eps_seq: Summable { scale: 1.0, ratio: 0.5 },
            delta_seq: Summable { scale: 1.0, ratio: 0.5 },
            lambda_min_surrogate: 1.0,
            max_outer: 200,
        }
    }
}

impl AlmOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.sigma0) && pos(self.sigma_max) && pos(self.tol_kkt) && pos(self.lambda_min_surrogate)) {
            return input("penalty, tolerance and eigenvalue surrogate must be positive");
        }
        if !(self.sigma_growth >= 1.0 && self.sigma_growth.is_finite()) {
            return input("penalty growth factor must be at least 1");
        }
        for s in [self.eps_seq, self.delta_seq] {
            if !(pos(s.scale) && s.ratio > 0.0 && s.ratio < 1.0) {
                return input("inner tolerance sequences must be positive and geometric with ratio < 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsnOptions {
    /// Armijo constant.
    pub mu: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    pub tau: f64,
    pub eta: f64,
    pub max_inner: usize,
    /// Largest free-set size solved by dense factorization; larger systems use CG.
    pub direct_solve_threshold: usize,
    pub cg_max_iters: usize,
}

impl Default for SsnOptions {
    fn default() -> Self {
        SsnOptions {
            mu: 1e-4,
            backtrack: 0.5,
            tau: 0.5,
            eta: 1e-2,
            max_inner: 50,
            direct_solve_threshold: 2000,
            cg_max_iters: 500,
        }
    }
}

impl SsnOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return input("Armijo constant must lie in (0, 1/2)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return input("backtracking factor must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return input("tau must lie in (0, 1]");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return input("eta must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Iterates of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Primal iterate, the prox center of the current subproblem.
    pub x: Vec<f64>,
    /// Dual representative.
    pub w: Vec<f64>,
    /// Cached `Q w`.
    pub qw: Vec<f64>,
    pub sigma: f64,
    /// Dual slack from the last multiplier update.
    pub z: Vec<f64>,
    pub outer_iter: usize,
    pub inner_iter_total: usize,
}

impl SolverState {
    /// Builds a state, computing `Q w`.
    pub fn new(problem: &QpProblem, x: Vec<f64>, w: Vec<f64>, sigma: f64) -> Result<Self> {
        let n = problem.dim();
        if x.len() != n || w.len() != n {
            return input(format!("starting points must have length {n}"));
        }
        if x.iter().chain(&w).any(|v| !v.is_finite()) {
            return input("starting points contain non-finite values");
        }
        let mut qw = vec![0.0; n];
        problem.q().matvec(&w, &mut qw);
        Ok(SolverState {
            x,
            w,
            qw,
            sigma,
            z: vec![0.0; n],
            outer_iter: 0,
            inner_iter_total: 0,
        })
    }
}

/// One row of the outer-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub kkt_residual: f64,
    pub sigma: f64,
    pub p: usize,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub x_opt: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub avg_inner_iters: f64,
    /// Coordinates strictly between their bounds at the solution.
    pub unbounded_support_count: usize,
    /// Coordinates away from their lower bound.
    pub nonzero_count: usize,
    pub objective: f64,
    /// Seconds.
    pub wall_time: f64,
    /// Set when an inner solve hit its iteration cap or stalled.
    pub inner_warning: bool,
    pub history: Vec<OuterRecord>,
}
