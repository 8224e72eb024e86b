//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion that ran failed.
//!
//! Benchmark criteria read LIBSVM files from `$SSNAL_DATA_DIR` (default:
//! `<workspace>/data`), as fetched by `scripts/fetch_datasets.sh`. A missing
//! file marks the criterion `FAIL (blocked)`; blocked criteria only affect
//! the exit status when `SSNAL_REQUIRE_DATA` is set.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssnal::baseline::{apg_solve, ApgOptions};
use ssnal::data::{parse_libsvm, split_train_test, Dataset, Preprocess};
use ssnal::kernel::KernelSpec;
use ssnal::projection::{hs_jacobian_apply, project_box_line, ActiveSetMask, ProjectionResult};
use ssnal::ssnal::{
    alm_solve, newton_direction, psi_eval, psi_grad, warm_start_rff, AlmOptions, GradientEval,
    SolveReport, SolverState, SsnOptions,
};
use ssnal::svm::{build_csvc_dual, evaluate, train, SvmConfig, SvmModel, TrainingSet};

struct Verdict {
    pass: bool,
    blocked: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict {
        pass,
        blocked: false,
        detail,
    }
}

/// Outer-iteration counts of converged benchmark runs, for the last criterion.
#[derive(Default)]
struct Ledger {
    runs: Vec<(String, usize)>,
    blocked: Vec<String>,
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut ledger = Ledger::default();
    type Check = fn(&mut Ledger) -> Verdict;
    let checks: [(usize, &str, Check); 10] = [
        (1, "oracle equivalence vs APG", oracle_equivalence),
        (2, "projection vs bisection oracle", projection_correctness),
        (3, "HS-Jacobian algebra", jacobian_algebra),
        (4, "reduced Newton system", reduced_newton),
        (5, "gradient vs finite differences", gradient_check),
        (6, "linear-kernel benchmark", linear_benchmark),
        (7, "RBF-kernel benchmark", rbf_benchmark),
        (8, "SVR benchmark", svr_benchmark),
        (9, "random-feature warm start", warm_start),
        (10, "outer-iteration economy", iteration_economy),
    ];
    let mut failed = 0;
    let mut blocked = 0;
    for (id, name, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check(&mut ledger)))
            .unwrap_or_else(|e| verdict(false, format!("panicked: {}", panic_text(&e))));
        let tag = match (v.pass, v.blocked) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (blocked)",
        };
        failed += (!v.pass && !v.blocked) as usize;
        blocked += v.blocked as usize;
        println!(
            "{tag} criterion {id:>2} {name}: {} [{:.1}s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if blocked > 0 {
        println!("{blocked} acceptance criteria blocked by missing datasets in {}", data_dir().display());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
    }
    let strict = std::env::var_os("SSNAL_REQUIRE_DATA").is_some();
    if failed > 0 || (strict && blocked > 0) {
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn oracle_equivalence(_: &mut Ledger) -> Verdict {
    let start = Instant::now();
    let alm = AlmOptions {
        tol_kkt: 1e-8,
        ..AlmOptions::default()
    };
    let apg = ApgOptions {
        tol_kkt: 1e-10,
        max_iters: 2_000_000,
        ..ApgOptions::default()
    };
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = rng.random_range(5..=50);
        let rq = random_qp(&mut rng, n, seed % 2 == 0);
        let a = alm_solve(&rq.problem, &alm, &SsnOptions::default(), None, None).unwrap();
        let b = apg_solve(&rq.problem, &apg, None).unwrap();
        let rel = dist(&a.x_opt, &b.x_opt) / (1.0 + norm(&b.x_opt));
        worst = worst.max(rel);
        if !(a.converged && b.converged && rel <= 1e-6) {
            bad.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 60.0,
        format!("worst relative gap {worst:.2e}, failures {bad:?}, {secs:.1}s of 60s"),
    )
}

fn projection_correctness(_: &mut Ledger) -> Verdict {
    let start = Instant::now();
    let mut worst_gap = 0.0f64;
    let mut worst_feas = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        let n = rng.random_range(1..=200);
        let set = random_set(&mut rng, n);
        let v: Vec<f64> = normal_vec(&mut rng, n).into_iter().map(|x| 3.0 * x).collect();
        let r = project_box_line(&v, &set).unwrap();
        worst_gap = worst_gap.max(dist(&r.x, &bisection_projection(&v, &set)));
        worst_feas = worst_feas.max(set.violation(&r.x));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_gap <= 1e-9 && worst_feas <= 1e-10 && secs < 10.0,
        format!("max |dx| {worst_gap:.2e}, max infeasibility {worst_feas:.2e}, {secs:.2}s of 10s"),
    )
}

fn jacobian_algebra(_: &mut Ledger) -> Verdict {
    let mut worst = [0.0f64; 4];
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + seed);
        let n = if seed % 5 == 0 { rng.random_range(1..=12) } else { rng.random_range(1..=200) };
        let a: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { normal(&mut rng) })
            .collect();
        let free: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        let mask = ActiveSetMask::from_free(n, free);
        let p = dense_p(&mask, &a);
        worst[0] = worst[0].max((&p - p.transpose()).amax());
        let y = DVector::from_vec(normal_vec(&mut rng, n));
        let py = &p * &y;
        let ppy = DVector::from_vec(hs_jacobian_apply(&mask, &a, py.as_slice()));
        worst[1] = worst[1].max((ppy - &py).norm() / y.norm().max(1e-300));
        let asa: f64 = mask.free.iter().map(|&i| a[i] * a[i]).sum();
        if asa != 0.0 {
            let pa = &p * DVector::from_column_slice(&a);
            worst[2] = worst[2].max(pa.amax() / (1.0 + norm(&a)));
        }
        if n <= 12 {
            worst[3] = worst[3].max((&p - dense_p0(&mask, &a)).amax());
        }
    }
    verdict(
        worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-12 && worst[3] <= 1e-10,
        format!(
            "asymmetry {:.1e}, idempotency {:.1e}, |Pa| {:.1e}, vs pseudo-inverse {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn reduced_newton(_: &mut Ledger) -> Verdict {
    let opts = SsnOptions::default();
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed);
        let n = rng.random_range(2..=12);
        let rq = random_qp(&mut rng, n, seed % 2 == 0);
        let sigma = 10f64.powf(rng.random_range(-1.0..3.0));
        let st = SolverState::new(&rq.problem, normal_vec(&mut rng, n), normal_vec(&mut rng, n), sigma).unwrap();
        let e = psi_grad(&rq.problem, &st, &st.w, &st.qw).unwrap();
        if norm(&e.grad) == 0.0 {
            continue;
        }
        let d = newton_direction(&rq.problem, &e, sigma, &opts).unwrap();
        let p = dense_p(&e.proj.active_mask, rq.problem.set().a());
        let (qd, dqd) = dense_newton(&rq.q, &p, d.sigma_used, &e.grad);
        worst.0 = worst.0.max(dist(&qd, &d.q_dir) / (1.0 + norm(&qd)));
        worst.1 = worst.1.max((dqd - d.dir_q_dir).abs() / (1.0 + dqd.abs()));
    }

    // cost at fixed n = 2000 as the free set grows
    let set = synthetic_classification(7, 2000, 8);
    let cfg = SvmConfig::classification(1.0, KernelSpec::rbf(0.5));
    let ps = [5usize, 20, 80];
    let mut times = [Duration::ZERO; 3];
    for (k, &p) in ps.iter().enumerate() {
        let mut samples = Vec::new();
        for rep in 0..7u64 {
            let problem = build_csvc_dual(&set, &cfg).unwrap();
            let n = problem.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(rep);
            let mut free: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(free.as_mut_slice(), &mut rng);
            free.truncate(p);
            free.sort_unstable();
            let s = normal_vec(&mut rng, n);
            let mut grad = vec![0.0; n];
            problem.q().matvec(&s, &mut grad);
            let eval = GradientEval {
                u: vec![0.0; n],
                proj: ProjectionResult {
                    x: vec![0.0; n],
                    lambda_hat: 0.0,
                    active_mask: ActiveSetMask::from_free(n, free),
                },
                s,
                grad,
                q_proj: vec![0.0; n],
                psi: 0.0,
            };
            let t = Instant::now();
            newton_direction(&problem, &eval, 1.0, &opts).unwrap();
            samples.push(t.elapsed());
        }
        samples.sort();
        times[k] = samples[samples.len() / 2];
    }
    let monotone = times[0] < times[1] && times[1] < times[2];
    verdict(
        worst.0 <= 1e-8 && worst.1 <= 1e-8 && monotone,
        format!(
            "max error Qd {:.1e}, dQd {:.1e}; median time at p=5/20/80, n=2000: {:?}/{:?}/{:?}",
            worst.0, worst.1, times[0], times[1], times[2]
        ),
    )
}

fn gradient_check(_: &mut Ledger) -> Verdict {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut points = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + seed);
        let n = rng.random_range(5..=40);
        let rq = random_qp(&mut rng, n, seed % 2 == 0);
        let x0 = project_box_line(&normal_vec(&mut rng, n), rq.problem.set()).unwrap().x;
        let sigma = 10f64.powf(rng.random_range(-1.0..2.0));
        let st = SolverState::new(&rq.problem, x0, vec![0.0; n], sigma).unwrap();
        let qmul = |w: &[f64]| (&rq.q * DVector::from_column_slice(w)).as_slice().to_vec();
        for _ in 0..100 {
            let w = normal_vec(&mut rng, n);
            let qw = qmul(&w);
            let e = psi_grad(&rq.problem, &st, &w, &qw).unwrap();
            let v = normal_vec(&mut rng, n);
            let at = |sgn: f64| {
                let wv: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + sgn * h * b).collect();
                psi_eval(&rq.problem, &st, &wv, &qmul(&wv)).unwrap()
            };
            let fd = (at(1.0) - at(-1.0)) / (2.0 * h);
            let exact: f64 = e.grad.iter().zip(&v).map(|(a, b)| a * b).sum();
            let scale = norm(&e.grad) * norm(&v);
            if scale > 0.0 {
                worst = worst.max((fd - exact).abs() / scale);
            }
            points += 1;
        }
    }
    verdict(worst <= 1e-6, format!("{points} points, worst relative error {worst:.2e}"))
}

// ---- benchmarks -------------------------------------------------------------

fn data_dir() -> PathBuf {
    std::env::var_os("SSNAL_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn load(names: &[&str]) -> Result<Dataset, String> {
    let dir = data_dir();
    for name in names {
        let path = dir.join(name);
        if path.is_file() {
            return parse_libsvm(&path).map_err(|e| format!("{}: {e}", path.display()));
        }
    }
    Err(format!("dataset {} not found in {}", names[0], dir.display()))
}

fn blocked(ledger: &mut Ledger, why: String) -> Verdict {
    ledger.blocked.push(why.clone());
    Verdict {
        pass: false,
        blocked: true,
        detail: why,
    }
}

struct Run {
    accuracy: f64,
    report: SolveReport,
    model: SvmModel,
}

fn classify(train_name: &str, test_name: &str, cfg: &SvmConfig, x0: Option<&[f64]>) -> Result<(TrainingSet, Run), String> {
    let tr = load(&[train_name])?;
    let te = load(&[test_name])?;
    let pre = Preprocess::for_classification(&tr).map_err(|e| e.to_string())?;
    let (s, y) = pre.apply(&tr).map_err(|e| e.to_string())?;
    let (st, yt) = pre.apply(&te).map_err(|e| e.to_string())?;
    let set = TrainingSet::new(s, y).map_err(|e| e.to_string())?;
    let test = TrainingSet::new(st, yt).map_err(|e| e.to_string())?;
    let (model, report) =
        train(&set, cfg, &AlmOptions::default(), &SsnOptions::default(), x0).map_err(|e| e.to_string())?;
    let accuracy = 100.0 * evaluate(&model, &test).map_err(|e| e.to_string())?.accuracy.unwrap();
    Ok((set, Run { accuracy, report, model }))
}

fn note_run(ledger: &mut Ledger, name: &str, r: &SolveReport) {
    if r.converged {
        ledger.runs.push((name.to_string(), r.outer_iters));
    }
}

fn linear_benchmark(ledger: &mut Ledger) -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    for (train_name, c, target, tol) in [("svmguide1", 64.0, 94.7, 1.0), ("w1a", 1.0, 97.7, 0.5)] {
        let cfg = SvmConfig::classification(c, KernelSpec::linear());
        let test_name = format!("{train_name}.t");
        let (_, run) = match classify(train_name, &test_name, &cfg, None) {
            Ok(r) => r,
            Err(e) => return blocked(ledger, e),
        };
        note_run(ledger, train_name, &run.report);
        let ok = (run.accuracy - target).abs() <= tol
            && run.report.converged
            && run.report.kkt_residual <= 1e-3
            && run.report.outer_iters <= 30;
        pass &= ok;
        lines.push(format!(
            "{train_name} C={c}: accuracy {:.2} (want {target}±{tol}), rkkt {:.1e}, outer {}, inner {}, suppvec {}, {:.1}s",
            run.accuracy,
            run.report.kkt_residual,
            run.report.outer_iters,
            run.report.inner_iters_total,
            run.report.unbounded_support_count,
            run.report.wall_time
        ));
    }
    verdict(pass, lines.join("; "))
}

fn rbf_benchmark(ledger: &mut Ledger) -> Verdict {
    let cfg = SvmConfig::classification(0.063, KernelSpec::rbf(1.0));
    let (_, run) = match classify("svmguide1", "svmguide1.t", &cfg, None) {
        Ok(r) => r,
        Err(e) => return blocked(ledger, e),
    };
    note_run(ledger, "svmguide1-rbf", &run.report);
    let sv = run.model.unbounded_support_count;
    let ok = (run.accuracy - 96.3).abs() <= 1.0 && run.report.converged && (10..=90).contains(&sv);
    verdict(
        ok,
        format!(
            "accuracy {:.2} (want 96.3±1.0), unbounded support {sv} (want 10..=90), nonzero {}, outer {}, inner {}, {:.1}s",
            run.accuracy,
            run.report.nonzero_count,
            run.report.outer_iters,
            run.report.inner_iters_total,
            run.report.wall_time
        ),
    )
}

fn svr_benchmark(ledger: &mut Ledger) -> Verdict {
    let ds = match load(&["space_ga", "space_ga_scale"]) {
        Ok(d) => d,
        Err(e) => return blocked(ledger, e),
    };
    let start = Instant::now();
    let cfg = SvmConfig::regression(64.0, KernelSpec::rbf(0.25), 0.063);
    let alm = AlmOptions {
        tol_kkt: 1e-6,
        ..AlmOptions::default()
    };
    let mut mses = Vec::new();
    let mut outer = Vec::new();
    let mut all_converged = true;
    for seed in 0..10u64 {
        let (tr, te) = split_train_test(&ds, 0.8, seed).unwrap();
        let pre = Preprocess::for_regression(&tr, true);
        let (s, y) = pre.apply(&tr).unwrap();
        let (st, yt) = pre.apply(&te).unwrap();
        let set = TrainingSet::new(s, y).unwrap();
        let test = TrainingSet::new(st, yt).unwrap();
        let (model, report) = train(&set, &cfg, &alm, &SsnOptions::default(), None).unwrap();
        note_run(ledger, &format!("space_ga-{seed}"), &report);
        all_converged &= report.converged;
        outer.push(report.outer_iters);
        mses.push(evaluate(&model, &test).unwrap().mse.unwrap());
    }
    let mean = mses.iter().sum::<f64>() / mses.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let ok = all_converged && (mean - 0.115).abs() <= 0.15 * 0.115 && secs < 120.0;
    verdict(
        ok,
        format!("mean MSE {mean:.4} (want 0.115±15%), outer {outer:?}, {secs:.1}s of 120s"),
    )
}

fn warm_start(ledger: &mut Ledger) -> Verdict {
    let cfg = SvmConfig::classification(0.063, KernelSpec::rbf(1.0));
    let (set, cold) = match classify("svmguide1", "svmguide1.t", &cfg, None) {
        Ok(r) => r,
        Err(e) => return blocked(ledger, e),
    };
    let cold_inner = cold.report.inner_iters_total;
    let mut warm = Vec::new();
    for seed in 0..5u64 {
        let x0 = warm_start_rff(&set, &cfg, 512, seed, &SsnOptions::default()).unwrap();
        let (_, report) = train(&set, &cfg, &AlmOptions::default(), &SsnOptions::default(), Some(&x0)).unwrap();
        note_run(ledger, &format!("svmguide1-warm-{seed}"), &report);
        warm.push(report.inner_iters_total);
    }
    verdict(
        warm.iter().all(|&w| w <= cold_inner),
        format!("cold inner {cold_inner}, warm inner {warm:?}"),
    )
}

fn iteration_economy(ledger: &mut Ledger) -> Verdict {
    if !ledger.blocked.is_empty() {
        let why = format!("{} benchmark criteria blocked", ledger.blocked.len());
        return blocked(ledger, why);
    }
    if ledger.runs.is_empty() {
        return verdict(false, "no converged benchmark run".to_string());
    }
    let max = ledger.runs.iter().max_by_key(|r| r.1).unwrap();
    verdict(
        max.1 <= 40,
        format!(
            "{} converged runs, most outer iterations {} ({})",
            ledger.runs.len(),
            max.1,
            max.0
        ),
    )
}
