//! The generalized Newton system of the inner subproblem, solved in the
//! space of free coordinates.

use nalgebra::{DMatrix, DVector};

use super::dense::{lu_solve, Spd};

use super::inner::GradientEval;
use super::{QpProblem, SsnOptions};
use crate::error::{Error, Result};
use crate::vecops::{dot, norm};

/// How a direction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionRoute {
    /// Empty free set; the direction is `-s`.
    EmptyFreeSet,
    /// Dense solve of the rank-one corrected reduced system.
    Reduced,
    /// Dense solve of the reduced system posed on `{y : a_J^T y = 0}`.
    Constrained,
    /// Projected conjugate gradients on the constrained reduced system.
    Iterative,
    /// `-s`, used when no Newton-type direction is a descent direction.
    Gradient,
}

#[derive(Debug, Clone)]
pub struct NewtonDirection {
    /// Direction in `w`-space; `Q dir` equals `q_dir`.
    pub dir: Vec<f64>,
    pub q_dir: Vec<f64>,
    pub dir_q_dir: f64,
    pub route: DirectionRoute,
    /// `||(Q + sigma Q P Q) dir + grad||`.
    pub residual: f64,
    /// `min(eta, ||grad||^(1 + tau))`.
    pub target: f64,
    /// Penalty used in the system (differs from the outer one after a
    /// near-singular perturbation).
    pub sigma_used: f64,
}

struct Reduced {
    /// `Q d = -grad - Q[:, J] y`.
    y: Vec<f64>,
    dir_q_dir: Option<f64>,
    sigma: f64,
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Rank-one corrected system on the free block (or the plain block when
/// `a_J = 0`), with the closed forms for `Q d` and `d^T Q d`.
fn solve_reduced(
    qjj: &DMatrix<f64>,
    a_j: &[f64],
    g_j: &[f64],
    s_dot_g: f64,
    sigma: f64,
) -> Option<Reduced> {
    let p = a_j.len();
    let aa = dot(a_j, a_j);
    let a_v = DVector::from_column_slice(a_j);
    let g_v = DVector::from_column_slice(g_j);
    let mut sig = sigma;
    for _ in 0..4 {
        let mut m = qjj.clone();
        for i in 0..p {
            m[(i, i)] += 1.0 / sig;
        }
        if aa == 0.0 {
            let v = lu_solve(&m, &g_v);
            let qv = qjj * &v;
            let dqd = v.dot(&qv) - 2.0 * v.dot(&g_v) + s_dot_g;
            return finite(Reduced {
                y: (-v).as_slice().to_vec(),
                dir_q_dir: Some(dqd),
                sigma: sig,
            });
        }
        let qa = qjj * &a_v;
        let aqa = a_v.dot(&qa);
        let den = aa - sig * aqa;
        if den.abs() <= 1e-12 * (aa + sig * aqa.abs()) {
            sig *= 1.0 + 1e-6;
            continue;
        }
        m += (&qa * qa.transpose()) * (sig / den);
        let ag = a_v.dot(&g_v);
        let rhs = &g_v + &qa * (sig * ag / den);
        let v = lu_solve(&m, &rhs);
        let qv = qjj * &v;
        let t = qa.dot(&v) - ag;
        let coef = sig * t / den;
        let y = -(&v + &a_v * coef);
        let dqd = v.dot(&qv) - 2.0 * v.dot(&g_v)
            + s_dot_g
            + (2.0 * sig * aa - sig * sig * aqa) / (den * den) * t * t;
        return finite(Reduced {
            y: y.as_slice().to_vec(),
            dir_q_dir: Some(dqd),
            sigma: sig,
        });
    }
    None
}

fn finite(r: Reduced) -> Option<Reduced> {
    if r.y.iter().all(|v| v.is_finite()) && r.dir_q_dir.is_none_or(f64::is_finite) {
        Some(r)
    } else {
        None
    }
}

/// Solves `(I/sigma + Q_JJ) y + g_J + mu a_J = 0`, `a_J^T y = 0` by Cholesky.
fn solve_constrained(qjj: &DMatrix<f64>, a_j: &[f64], g_j: &[f64], sigma: f64) -> Option<Reduced> {
    let p = a_j.len();
    let mut h = qjj.clone();
    for i in 0..p {
        h[(i, i)] += 1.0 / sigma;
    }
    let chol = Spd::factor(&h)?;
    let hg = chol.solve(&DVector::from_column_slice(g_j));
    let y = if dot(a_j, a_j) == 0.0 {
        -hg
    } else {
        let a_v = DVector::from_column_slice(a_j);
        let ha = chol.solve(&a_v);
        let mu = -a_v.dot(&hg) / a_v.dot(&ha);
        -(hg + ha * mu)
    };
    finite(Reduced {
        y: y.as_slice().to_vec(),
        dir_q_dir: None,
        sigma,
    })
}

fn project_free(a_j: &[f64], aa: f64, v: &mut [f64]) {
    if aa != 0.0 {
        let t = dot(a_j, v) / aa;
        for (vi, ai) in v.iter_mut().zip(a_j) {
            *vi -= t * ai;
        }
    }
}

/// Projected CG on the constrained system. Returns `None` when the residual
/// target is not reached.
fn solve_iterative(
    problem: &QpProblem,
    free: &[usize],
    a_j: &[f64],
    g_j: &[f64],
    sigma: f64,
    tol: f64,
    max_iters: usize,
) -> Option<Reduced> {
    let p = free.len();
    let n = problem.dim();
    let aa = dot(a_j, a_j);
    let mut full = vec![0.0; n];
    let mut apply = |y: &[f64]| -> Vec<f64> {
        problem.q().matvec_cols(free, y, &mut full);
        let mut h: Vec<f64> = (0..p).map(|k| y[k] / sigma + full[free[k]]).collect();
        project_free(a_j, aa, &mut h);
        h
    };
    let mut y = vec![0.0; p];
    let mut r: Vec<f64> = g_j.iter().map(|v| -v).collect();
    project_free(a_j, aa, &mut r);
    let mut dirn = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol {
            return finite(Reduced {
                y,
                dir_q_dir: None,
                sigma,
            });
        }
        let ad = apply(&dirn);
        let curv = dot(&dirn, &ad);
        if curv <= 0.0 {
            return None;
        }
        let step = rr / curv;
        crate::vecops::axpy(step, &dirn, &mut y);
        crate::vecops::axpy(-step, &ad, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (d, ri) in dirn.iter_mut().zip(&r) {
            *d = ri + beta * *d;
        }
        rr = rr_new;
    }
    if rr.sqrt() <= tol {
        return finite(Reduced {
            y,
            dir_q_dir: None,
            sigma,
        });
    }
    None
}

/// Turns a reduced solution into `(dir, Q dir, dir^T Q dir)` and measures the
/// residual of the full Newton equation.
fn finish(
    problem: &QpProblem,
    eval: &GradientEval,
    sigma: f64,
    red: Reduced,
    route: DirectionRoute,
    target: f64,
) -> NewtonDirection {
    let n = problem.dim();
    let free = &eval.proj.active_mask.free;
    let a = problem.set().a();
    let g = &eval.grad;
    let mut qy = vec![0.0; n];
    problem.q().matvec_cols(free, &red.y, &mut qy);
    let q_dir: Vec<f64> = g.iter().zip(&qy).map(|(gi, qi)| -gi - qi).collect();
    let dir_q_dir = red.dir_q_dir.unwrap_or_else(|| {
        let mut acc = dot(&eval.s, g);
        for (k, &i) in free.iter().enumerate() {
            acc += 2.0 * red.y[k] * g[i] + red.y[k] * qy[i];
        }
        acc
    });
    let mut dir: Vec<f64> = eval.s.iter().map(|v| -v).collect();
    for (k, &i) in free.iter().enumerate() {
        dir[i] -= red.y[k];
    }
    // Newton residual: Q[:, J] (sigma P_J q_dir_J - y)
    let a_j = gather(a, free);
    let mut e = gather(&q_dir, free);
    project_free(&a_j, dot(&a_j, &a_j), &mut e);
    for (ek, yk) in e.iter_mut().zip(&red.y) {
        *ek = sigma * *ek - yk;
    }
    let mut res = vec![0.0; n];
    problem.q().matvec_cols(free, &e, &mut res);
    NewtonDirection {
        dir,
        q_dir,
        dir_q_dir,
        route,
        residual: norm(&res),
        target,
        sigma_used: red.sigma,
    }
}

fn gradient_direction(eval: &GradientEval, target: f64, sigma: f64, route: DirectionRoute) -> NewtonDirection {
    NewtonDirection {
        dir: eval.s.iter().map(|v| -v).collect(),
        q_dir: eval.grad.iter().map(|v| -v).collect(),
        dir_q_dir: dot(&eval.s, &eval.grad),
        route,
        residual: 0.0,
        target,
        sigma_used: sigma,
    }
}

fn is_descent(eval: &GradientEval, d: &NewtonDirection) -> bool {
    dot(&eval.grad, &d.dir) < 0.0 && d.dir_q_dir >= 0.0
}

/// Computes an (inexact) semismooth Newton direction for the inner subproblem
/// at the point described by `eval`.
pub fn newton_direction(
    problem: &QpProblem,
    eval: &GradientEval,
    sigma: f64,
    opts: &SsnOptions,
) -> Result<NewtonDirection> {
    let gnorm = norm(&eval.grad);
    if gnorm == 0.0 {
        return Err(Error::Input("Newton direction requested at a zero gradient".into()));
    }
    let target = opts.eta.min(gnorm.powf(1.0 + opts.tau));
    let free = &eval.proj.active_mask.free;
    let p = free.len();
    if p == 0 {
        return Ok(gradient_direction(eval, target, sigma, DirectionRoute::EmptyFreeSet));
    }
    let a_j = gather(problem.set().a(), free);
    let g_j = gather(&eval.grad, free);
    let s_dot_g = dot(&eval.s, &eval.grad);

    let mut best: Option<NewtonDirection> = None;
    let consider = |cand: NewtonDirection, best: &mut Option<NewtonDirection>| {
        if !is_descent(eval, &cand) {
            return;
        }
        if best.as_ref().is_none_or(|b| cand.residual < b.residual) {
            *best = Some(cand);
        }
    };

    if p > opts.direct_solve_threshold {
        let diag = problem.q().diagonal();
        let trace: f64 = diag.iter().sum();
        let trace_j: f64 = free.iter().map(|&i| diag[i]).sum();
        let bound = (trace * trace_j).sqrt().max(f64::MIN_POSITIVE);
        let tol = target / (sigma * bound);
        if let Some(red) = solve_iterative(problem, free, &a_j, &g_j, sigma, tol, opts.cg_max_iters) {
            consider(finish(problem, eval, sigma, red, DirectionRoute::Iterative, target), &mut best);
            if let Some(b) = &best {
                if b.residual <= target {
                    return Ok(best.unwrap());
                }
            }
        }
        log::debug!("cg did not reach target; falling back to a dense solve (p={p})");
    }

    let qjj = problem.q().submatrix(free);
    if best.is_none() {
        if let Some(red) = solve_reduced(&qjj, &a_j, &g_j, s_dot_g, sigma) {
            consider(finish(problem, eval, sigma, red, DirectionRoute::Reduced, target), &mut best);
        }
    }
    // the closed form loses accuracy to cancellation once sigma Q_JJ dominates I
    let accurate = target.min(1e-10 * gnorm);
    let good = best.as_ref().is_some_and(|b| b.residual <= accurate && b.sigma_used == sigma);
    if !good {
        if let Some(red) = solve_constrained(&qjj, &a_j, &g_j, sigma) {
            consider(finish(problem, eval, sigma, red, DirectionRoute::Constrained, target), &mut best);
        }
    }
    Ok(best.unwrap_or_else(|| gradient_direction(eval, target, sigma, DirectionRoute::Gradient)))
}
