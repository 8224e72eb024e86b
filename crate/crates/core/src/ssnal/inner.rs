//! Inner subproblem: minimize the smooth dual function `psi` of one
//! augmented Lagrangian step by semismooth Newton with Armijo backtracking.

use super::newton::{newton_direction, DirectionRoute, NewtonDirection};
use super::outer::kkt_residual_with_qx;
use super::{AlmOptions, QpProblem, SolverState, SsnOptions};
use crate::error::{Error, Result};
use crate::projection::{project_box_line, ProjectionResult};
use crate::vecops::{dist, dot, norm};

const MAX_BACKTRACKS: usize = 60;

/// Everything computed at one inner iterate from a single projection and one
/// product with `Q`.
#[derive(Debug, Clone)]
pub struct GradientEval {
    /// `x_k - sigma (Q w + c)`.
    pub u: Vec<f64>,
    /// Projection of `u` onto the feasible set.
    pub proj: ProjectionResult,
    /// `w - proj.x`.
    pub s: Vec<f64>,
    /// `Q s`.
    pub grad: Vec<f64>,
    /// `Q proj.x`, obtained as `Q w - grad`.
    pub q_proj: Vec<f64>,
    pub psi: f64,
}

fn shifted_point(problem: &QpProblem, state: &SolverState, qw: &[f64]) -> Vec<f64> {
    let c = problem.c();
    (0..qw.len())
        .map(|i| state.x[i] - state.sigma * (qw[i] + c[i]))
        .collect()
}

/// `psi` from its parts, arranged to avoid cancellation between the two large
/// squared norms:
/// `1/2 w^T Q w - (Q w + c)^T pi - ||pi - x_k||^2 / (2 sigma)`.
fn psi_from(problem: &QpProblem, state: &SolverState, w: &[f64], qw: &[f64], pi: &[f64]) -> f64 {
    let c = problem.c();
    let mut lin = 0.0;
    let mut prox = 0.0;
    for i in 0..pi.len() {
        lin += (qw[i] + c[i]) * pi[i];
        let t = pi[i] - state.x[i];
        prox += t * t;
    }
    0.5 * dot(w, qw) - lin - prox / (2.0 * state.sigma)
}

/// `psi(w)` for the subproblem centered at `state.x` with penalty `state.sigma`;
/// `qw` must equal `Q w`.
pub fn psi_eval(problem: &QpProblem, state: &SolverState, w: &[f64], qw: &[f64]) -> Result<f64> {
    let u = shifted_point(problem, state, qw);
    let proj = project_box_line(&u, problem.set())?;
    Ok(psi_from(problem, state, w, qw, &proj.x))
}

/// Gradient `Q (w - proj(u(w)))` together with the projection it used.
pub fn psi_grad(problem: &QpProblem, state: &SolverState, w: &[f64], qw: &[f64]) -> Result<GradientEval> {
    let u = shifted_point(problem, state, qw);
    let proj = project_box_line(&u, problem.set())?;
    let s: Vec<f64> = w.iter().zip(&proj.x).map(|(a, b)| a - b).collect();
    let mut grad = vec![0.0; s.len()];
    problem.q().matvec(&s, &mut grad);
    let q_proj = qw.iter().zip(&grad).map(|(a, b)| a - b).collect();
    let psi = psi_from(problem, state, w, qw, &proj.x);
    Ok(GradientEval {
        u,
        proj,
        s,
        grad,
        q_proj,
        psi,
    })
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub w: Vec<f64>,
    pub qw: Vec<f64>,
    /// `psi(w_new) - psi(w)`.
    pub psi_change: f64,
    pub trials: usize,
}

/// Armijo backtracking along `dir`. Each trial costs one projection; `Q` is
/// never applied.
pub fn line_search(
    problem: &QpProblem,
    state: &SolverState,
    w: &[f64],
    qw: &[f64],
    eval: &GradientEval,
    d: &NewtonDirection,
    opts: &SsnOptions,
) -> Result<LineSearchResult> {
    let slope = dot(&eval.grad, &d.dir);
    if !(slope < 0.0) {
        return Err(Error::LineSearch { trials: 0, slope });
    }
    let n = w.len();
    let c = problem.c();
    let sigma = state.sigma;
    let pi0 = &eval.proj.x;
    let w_qd = dot(w, &d.q_dir);
    let mut alpha = 1.0;
    let mut u = vec![0.0; n];
    for m in 0..=MAX_BACKTRACKS {
        for i in 0..n {
            u[i] = eval.u[i] - sigma * alpha * d.q_dir[i];
        }
        let pa = project_box_line(&u, problem.set())?.x;
        let mut lin = 0.0;
        let mut prox = 0.0;
        for i in 0..n {
            let dp = pa[i] - pi0[i];
            lin += (qw[i] + c[i]) * dp + alpha * d.q_dir[i] * pa[i];
            prox += dp * (pa[i] + pi0[i] - 2.0 * state.x[i]);
        }
        let change = alpha * w_qd + 0.5 * alpha * alpha * d.dir_q_dir - lin - prox / (2.0 * sigma);
        if change <= opts.mu * alpha * slope {
            let mut w_new = w.to_vec();
            let mut qw_new = qw.to_vec();
            crate::vecops::axpy(alpha, &d.dir, &mut w_new);
            crate::vecops::axpy(alpha, &d.q_dir, &mut qw_new);
            return Ok(LineSearchResult {
                alpha,
                w: w_new,
                qw: qw_new,
                psi_change: change,
                trials: m + 1,
            });
        }
        alpha *= opts.backtrack;
    }
    Err(Error::LineSearch {
        trials: MAX_BACKTRACKS + 1,
        slope,
    })
}

/// Why an inner solve returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    /// Both gradient tests passed.
    Tolerance,
    /// The first gradient test passed and the projected point already
    /// satisfies the outer KKT tolerance.
    OuterTolerance,
    /// The gradient is at rounding level.
    NoiseFloor,
    MaxIterations,
    /// No direction achieved sufficient decrease.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub iters: usize,
    /// Evaluation at the returned `w`.
    pub eval: GradientEval,
    pub stop: InnerStop,
    pub grad_norms: Vec<f64>,
    pub routes: Vec<DirectionRoute>,
}

impl InnerOutcome {
    pub fn warning(&self) -> bool {
        matches!(self.stop, InnerStop::MaxIterations | InnerStop::Stalled)
    }
}

/// Runs semismooth Newton on the `k`-th subproblem, updating `state.w` and
/// `state.qw` in place.
pub fn ssn_solve(
    problem: &QpProblem,
    state: &mut SolverState,
    k: usize,
    alm: &AlmOptions,
    ssn: &SsnOptions,
) -> Result<InnerOutcome> {
    problem.q().matvec(&state.w.clone(), &mut state.qw);
    let root = alm.lambda_min_surrogate.sqrt() / state.sigma.sqrt();
    let tol_a = root * alm.eps_seq.at(k);
    let tol_b = root * alm.delta_seq.at(k);
    let mut grad_norms = Vec::new();
    let mut routes = Vec::new();
    let mut iters = 0;
    loop {
        let eval = psi_grad(problem, state, &state.w, &state.qw)?;
        let gnorm = norm(&eval.grad);
        grad_norms.push(gnorm);
        let step = dist(&eval.proj.x, &state.x);
        let done = |stop| {
            Ok(InnerOutcome {
                iters,
                eval: eval.clone(),
                stop,
                grad_norms: grad_norms.clone(),
                routes: routes.clone(),
            })
        };
        if gnorm <= tol_a && gnorm <= tol_b * step {
            return done(InnerStop::Tolerance);
        }
        // (B') alone may be unattainable once proj(u) has settled on x_k
        if gnorm <= tol_a && kkt_residual_with_qx(problem, &eval.proj.x, &eval.q_proj)? < alm.tol_kkt {
            return done(InnerStop::OuterTolerance);
        }
        let floor = 100.0 * f64::EPSILON * (norm(&state.qw) + norm(&eval.q_proj));
        if gnorm <= floor {
            return done(InnerStop::NoiseFloor);
        }
        if iters >= ssn.max_inner {
            return done(InnerStop::MaxIterations);
        }
        let d = newton_direction(problem, &eval, state.sigma, ssn)?;
        let ls = match line_search(problem, state, &state.w, &state.qw, &eval, &d, ssn) {
            Ok(ls) => Some((ls, d.route)),
            Err(Error::LineSearch { .. }) if d.route != DirectionRoute::EmptyFreeSet => {
                let g = NewtonDirection {
                    dir: eval.s.iter().map(|v| -v).collect(),
                    q_dir: eval.grad.iter().map(|v| -v).collect(),
                    dir_q_dir: dot(&eval.s, &eval.grad),
                    route: DirectionRoute::Gradient,
                    residual: f64::NAN,
                    target: d.target,
                    sigma_used: state.sigma,
                };
                match line_search(problem, state, &state.w, &state.qw, &eval, &g, ssn) {
                    Ok(ls) => Some((ls, DirectionRoute::Gradient)),
                    Err(Error::LineSearch { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::LineSearch { .. }) => None,
            Err(e) => return Err(e),
        };
        let Some((ls, route)) = ls else {
            log::debug!("inner solve stalled at gnorm={gnorm:e}");
            return done(InnerStop::Stalled);
        };
        routes.push(route);
        state.w = ls.w;
        state.qw = ls.qw;
        iters += 1;
        state.inner_iter_total += 1;
    }
}
