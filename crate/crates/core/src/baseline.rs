//! Accelerated projected gradient (FISTA with function-value restart) for the
//! same problem class. Slow but simple; used to cross-check the main solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::projection::project_box_line;
use crate::ssnal::outer::{kkt_residual_with_qx, make_report};
use crate::ssnal::{QpProblem, SolveReport};
use crate::vecops::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restart {
    None,
    FunctionValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApgOptions {
    pub tol_kkt: f64,
    pub max_iters: usize,
    pub restart: Restart,
    /// Step is `1 / L`; estimated by power iteration when `None`.
    pub lipschitz_estimate: Option<f64>,
}

impl Default for ApgOptions {
    fn default() -> Self {
        ApgOptions {
            tol_kkt: 1e-3,
            max_iters: 20_000,
            restart: Restart::FunctionValue,
            lipschitz_estimate: None,
        }
    }
}

const POWER_STEPS: usize = 30;
const SAFETY: f64 = 1.1;

/// Largest eigenvalue estimate of `Q` from a fixed starting vector.
pub fn power_iteration(problem: &QpProblem, steps: usize) -> f64 {
    let n = problem.dim();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut qv = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..steps {
        problem.q().matvec(&v, &mut qv);
        est = dot(&v, &qv);
        let nq = norm(&qv);
        if nq == 0.0 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = qv[i] / nq;
        }
    }
    problem.q().matvec(&v, &mut qv);
    est.max(dot(&v, &qv))
}

/// Solves the problem by accelerated projected gradient.
pub fn apg_solve(problem: &QpProblem, opts: &ApgOptions, x0: Option<&[f64]>) -> Result<SolveReport> {
    if !(opts.tol_kkt > 0.0) {
        return input("tolerance must be positive");
    }
    let start = Instant::now();
    let n = problem.dim();
    let c = problem.c();
    let set = problem.set();
    if let Some(x0) = x0 {
        if x0.len() != n {
            return input(format!("starting point must have length {n}"));
        }
    }
    let mut lip = match opts.lipschitz_estimate {
        Some(l) if l > 0.0 => l,
        Some(_) => return input("Lipschitz estimate must be positive"),
        None => power_iteration(problem, POWER_STEPS) * SAFETY,
    };
    if lip <= 0.0 {
        lip = 1.0;
    }
    let f_of = |x: &[f64], qx: &[f64]| 0.5 * dot(x, qx) + dot(c, x);

    let init = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut x = project_box_line(&init, set)?.x;
    let mut qx = vec![0.0; n];
    problem.q().matvec(&x, &mut qx);
    let mut fx = f_of(&x, &qx);
    if kkt_residual_with_qx(problem, &x, &qx)? < opts.tol_kkt {
        return make_report("apg", problem, x, true, 0, 0, false, Vec::new(), start);
    }
    let mut y = x.clone();
    let mut qy = qx.clone();
    let mut t = 1.0f64;
    let mut step_point = vec![0.0; n];
    let mut qx_new = vec![0.0; n];
    let mut converged = false;
    let mut iters = 0;
    let mut restarts = 0usize;
    while iters < opts.max_iters {
        iters += 1;
        let fy = f_of(&y, &qy);
        let x_new = loop {
            for i in 0..n {
                step_point[i] = y[i] - (qy[i] + c[i]) / lip;
            }
            let cand = project_box_line(&step_point, set)?.x;
            problem.q().matvec(&cand, &mut qx_new);
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy
                + diff.iter().zip(qy.iter().zip(c)).map(|(d, (q, ci))| d * (q + ci)).sum::<f64>()
                + 0.5 * lip * dot(&diff, &diff);
            let f_cand = f_of(&cand, &qx_new);
            if f_cand <= model + 1e-12 * (1.0 + model.abs()) {
                break cand;
            }
            lip *= 2.0;
        };
        let f_new = f_of(&x_new, &qx_new);
        if opts.restart == Restart::FunctionValue && f_new > fx && t > 1.0 {
            y.copy_from_slice(&x);
            qy.copy_from_slice(&qx);
            t = 1.0;
            restarts += 1;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        for i in 0..n {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
            qy[i] = qx_new[i] + beta * (qx_new[i] - qx[i]);
        }
        x = x_new;
        qx.copy_from_slice(&qx_new);
        fx = f_new;
        t = t_new;
        if kkt_residual_with_qx(problem, &x, &qx)? < opts.tol_kkt {
            converged = true;
            break;
        }
    }
    let report = make_report("apg", problem, x, converged, iters, 0, false, Vec::new(), start)?;
    log::info!(
        "solver=apg n={} iters={} restarts={} rkkt={:.3e} converged={} time={:.3}",
        n,
        iters,
        restarts,
        report.kkt_residual,
        converged,
        report.wall_time
    );
    Ok(report)
}
