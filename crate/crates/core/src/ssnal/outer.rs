//! Augmented Lagrangian outer loop and the relative KKT residual.

use std::time::Instant;

use super::inner::ssn_solve;
use super::{AlmOptions, OuterRecord, QpProblem, SolveReport, SolverState, SsnOptions};
use crate::error::{input, Result};
use crate::projection::{project_box_line, BoxLineSet};
use crate::vecops::norm;

/// `||x - proj(x - Q x - c)|| / (1 + ||x||)` given `qx = Q x`.
pub fn kkt_residual_with_qx(problem: &QpProblem, x: &[f64], qx: &[f64]) -> Result<f64> {
    let c = problem.c();
    let v: Vec<f64> = (0..x.len()).map(|i| x[i] - qx[i] - c[i]).collect();
    let p = project_box_line(&v, problem.set())?;
    let num = crate::vecops::dist(x, &p.x);
    Ok(num / (1.0 + norm(x)))
}

/// Relative KKT residual of `x`.
pub fn kkt_residual(x: &[f64], problem: &QpProblem) -> Result<f64> {
    if x.len() != problem.dim() {
        return input(format!(
            "point of length {} for a problem of dimension {}",
            x.len(),
            problem.dim()
        ));
    }
    let mut qx = vec![0.0; x.len()];
    problem.q().matvec(x, &mut qx);
    kkt_residual_with_qx(problem, x, &qx)
}

/// Counts (strictly free, away-from-lower) coordinates of `x`.
pub(crate) fn support_counts(x: &[f64], set: &BoxLineSet) -> (usize, usize) {
    let (l, u) = (set.l(), set.u());
    let mut free = 0;
    let mut nonzero = 0;
    for i in 0..x.len() {
        let above = x[i] > l[i] + 1e-12 * (1.0 + l[i].abs());
        let below = x[i] < u[i] - 1e-12 * (1.0 + u[i].abs());
        if above {
            nonzero += 1;
        }
        if above && below {
            free += 1;
        }
    }
    (free, nonzero)
}

/// Assembles a report for `x`, recomputing the residual and objective.
#[allow(clippy::too_many_arguments)]
pub(crate) fn make_report(
    solver: &str,
    problem: &QpProblem,
    x: Vec<f64>,
    converged: bool,
    outer_iters: usize,
    inner_total: usize,
    inner_warning: bool,
    history: Vec<OuterRecord>,
    start: Instant,
) -> Result<SolveReport> {
    let mut qx = vec![0.0; x.len()];
    problem.q().matvec(&x, &mut qx);
    let kkt = kkt_residual_with_qx(problem, &x, &qx)?;
    let objective = problem.objective_with_qx(&x, &qx);
    let (free, nonzero) = support_counts(&x, problem.set());
    Ok(SolveReport {
        solver: solver.to_string(),
        x_opt: x,
        kkt_residual: kkt,
        converged,
        outer_iters,
        inner_iters_total: inner_total,
        avg_inner_iters: if outer_iters > 0 {
            inner_total as f64 / outer_iters as f64
        } else {
            0.0
        },
        unbounded_support_count: free,
        nonzero_count: nonzero,
        objective,
        wall_time: start.elapsed().as_secs_f64(),
        inner_warning,
        history,
    })
}

/// Solves the problem from `x0`, `w0` (zero when omitted).
pub fn alm_solve(
    problem: &QpProblem,
    alm: &AlmOptions,
    ssn: &SsnOptions,
    x0: Option<&[f64]>,
    w0: Option<&[f64]>,
) -> Result<SolveReport> {
    alm_solve_with_progress(problem, alm, ssn, x0, w0, &mut |_| {})
}

/// [`alm_solve`] with a callback invoked after every outer iteration.
pub fn alm_solve_with_progress(
    problem: &QpProblem,
    alm: &AlmOptions,
    ssn: &SsnOptions,
    x0: Option<&[f64]>,
    w0: Option<&[f64]>,
    progress: &mut dyn FnMut(&OuterRecord),
) -> Result<SolveReport> {
    alm.validate()?;
    ssn.validate()?;
    let start = Instant::now();
    let n = problem.dim();
    let x0 = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let w0 = w0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut state = SolverState::new(problem, x0, w0, alm.sigma0)?;

    if kkt_residual(&state.x, problem)? < alm.tol_kkt {
        return make_report("ssnal", problem, state.x, true, 0, 0, false, Vec::new(), start);
    }

    let mut history = Vec::new();
    let mut warning = false;
    let mut converged = false;
    for k in 0..alm.max_outer {
        let before = state.inner_iter_total;
        let inner = ssn_solve(problem, &mut state, k, alm, ssn)?;
        warning |= inner.warning();
        let eval = inner.eval;
        for i in 0..n {
            state.z[i] = (eval.u[i] - eval.proj.x[i]) / state.sigma;
        }
        state.x = eval.proj.x;
        state.outer_iter = k + 1;
        let kkt = kkt_residual(&state.x, problem)?;
        let rec = OuterRecord {
            k,
            kkt_residual: kkt,
            sigma: state.sigma,
            p: eval.proj.active_mask.p(),
            inner_iters: state.inner_iter_total - before,
        };
        log::debug!(
            "outer k={} rkkt={:.3e} sigma={:.3e} p={} inner={} stop={:?}",
            rec.k,
            rec.kkt_residual,
            rec.sigma,
            rec.p,
            rec.inner_iters,
            inner.stop
        );
        progress(&rec);
        history.push(rec);
        if kkt < alm.tol_kkt {
            converged = true;
            break;
        }
        state.sigma = (state.sigma * alm.sigma_growth).min(alm.sigma_max);
    }
    let report = make_report(
        "ssnal",
        problem,
        state.x,
        converged,
        state.outer_iter,
        state.inner_iter_total,
        warning,
        history,
        start,
    )?;
    log::info!(
        "solver=ssnal n={} outer={} inner={} rkkt={:.3e} converged={} p={} time={:.3}",
        n,
        report.outer_iters,
        report.inner_iters_total,
        report.kkt_residual,
        report.converged,
        report.unbounded_support_count,
        report.wall_time
    );
    Ok(report)
}
