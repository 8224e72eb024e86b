use super::{alm_solve, AlmOptions, SsnOptions};
use crate::error::{input, Result};
use crate::kernel::KernelKind;
use crate::svm::{build_dual, Approx, SvmConfig, TrainingSet};

/// Tolerance of the cheap approximate solve.
const WARM_TOL: f64 = 1e-3;

/// Starting point for an exact RBF-kernel solve: the solution of the same
/// problem with the kernel replaced by `n_freq` random Fourier features
/// (`2 * n_freq` feature columns).
pub fn warm_start_rff(
    set: &TrainingSet,
    config: &SvmConfig,
    n_freq: usize,
    seed: u64,
    ssn: &SsnOptions,
) -> Result<Vec<f64>> {
    if config.kernel.kind != KernelKind::Rbf {
        return input("random Fourier warm start needs an RBF kernel");
    }
    let approx = SvmConfig {
        approx: Approx::Rff(n_freq),
        seed,
        ..config.clone()
    };
    let problem = build_dual(set, &approx)?;
    let alm = AlmOptions {
        tol_kkt: WARM_TOL,
        ..AlmOptions::default()
    };
    let report = alm_solve(&problem, &alm, ssn, None, None)?;
    log::debug!(
        "warm start n_freq={} outer={} inner={} rkkt={:.3e}",
        n_freq,
        report.outer_iters,
        report.inner_iters_total,
        report.kkt_residual
    );
    Ok(report.x_opt)
}
