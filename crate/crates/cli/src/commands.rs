use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use ssnal::baseline::{apg_solve, ApgOptions};
use ssnal::data::{parse_libsvm, split_train_test, Dataset, Preprocess};
use ssnal::kernel::{DenseQ, KernelSpec};
use ssnal::projection::BoxLineSet;
use ssnal::ssnal::{alm_solve, warm_start_rff, AlmOptions, QpProblem, SolveReport, SsnOptions};
use ssnal::svm::{
    build_dual, cross_validate, evaluate, score, train, Approx, Metrics, SvmConfig, SvmModel, Task,
    TrainingSet,
};

use crate::args::*;
use crate::fail::{CliError, CliResult};
use crate::files::{read_rows, read_vector, Outputs};

/// Whether every solve reached its tolerance.
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn from(converged: bool) -> Status {
        if converged {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

pub fn run(cmd: Command) -> CliResult<Status> {
    match cmd {
        Command::SolveQp(a) => solve_qp(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Cv(a) => cv_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn alm_options(s: &SolverArgs) -> AlmOptions {
    AlmOptions {
        tol_kkt: s.tol,
        sigma0: s.sigma0,
        max_outer: s.max_outer,
        ..AlmOptions::default()
    }
}

fn ssn_options(s: &SolverArgs) -> SsnOptions {
    SsnOptions {
        max_inner: s.max_inner,
        ..SsnOptions::default()
    }
}

fn apg_options(s: &SolverArgs) -> ApgOptions {
    ApgOptions {
        tol_kkt: s.tol,
        max_iters: s.apg_max_iters,
        ..ApgOptions::default()
    }
}

fn validate_solver(s: &SolverArgs) -> CliResult<()> {
    alm_options(s).validate()?;
    ssn_options(s).validate()?;
    Ok(())
}

fn svm_config(m: &ModelArgs) -> CliResult<SvmConfig> {
    let kernel = match m.kernel {
        KernelArg::Linear => KernelSpec::linear(),
        KernelArg::Rbf => KernelSpec::rbf(m.alpha),
    };
    let approx: Approx = m.approx.parse()?;
    let mut cfg = match m.task {
        TaskArg::Csvc => SvmConfig::classification(m.c, kernel),
        TaskArg::Svr => SvmConfig::regression(m.c, kernel, m.epsilon),
    };
    cfg.approx = approx;
    cfg.seed = m.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path) -> CliResult<Dataset> {
    parse_libsvm(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn fit_preprocess(ds: &Dataset, task: Task, raw_targets: bool) -> CliResult<Preprocess> {
    Ok(match task {
        Task::Classification => Preprocess::for_classification(ds)?,
        Task::Regression => Preprocess::for_regression(ds, !raw_targets),
    })
}

fn training_set(pre: &Preprocess, ds: &Dataset) -> CliResult<TrainingSet> {
    let (samples, targets) = pre.apply(ds)?;
    Ok(TrainingSet::new(samples, targets)?)
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

// ---- solve-qp ---------------------------------------------------------------

fn solve_qp(a: SolveQpArgs) -> CliResult<Status> {
    validate_solver(&a.solver_opts)?;
    let problem = match &a.data {
        Some(qpath) => dense_problem(&a, qpath)?,
        None => {
            let path = a.dataset.as_ref().expect("clap enforces --data or --dataset");
            let cfg = svm_config(&a.model)?;
            let ds = load(path)?;
            let pre = fit_preprocess(&ds, cfg.task, a.model.raw_targets)?;
            build_dual(&training_set(&pre, &ds)?, &cfg)?
        }
    };
    let x0 = match &a.x0 {
        Some(p) => Some(read_vector(p)?),
        None => None,
    };
    let report = match a.solver {
        SolverKind::Ssnal => alm_solve(
            &problem,
            &alm_options(&a.solver_opts),
            &ssn_options(&a.solver_opts),
            x0.as_deref(),
            None,
        )?,
        SolverKind::Apg => apg_solve(&problem, &apg_options(&a.solver_opts), x0.as_deref())?,
    };
    let mut out = Outputs::default();
    out.emit(a.out.as_deref(), to_json(&report)?);
    out.flush()?;
    Ok(Status::from(report.converged))
}

fn dense_problem(a: &SolveQpArgs, qpath: &Path) -> CliResult<QpProblem> {
    let need = |p: &Option<std::path::PathBuf>, flag: &str| -> CliResult<Vec<f64>> {
        match p {
            Some(p) => read_vector(p),
            None => Err(CliError::input(format!("--{flag} is required with --data"))),
        }
    };
    let rows = read_rows(qpath)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::input(format!("{}: Q must be square", qpath.display())));
    }
    let q = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let set = BoxLineSet::new(need(&a.a, "a")?, a.d, need(&a.l, "l")?, need(&a.u, "u")?)?;
    Ok(QpProblem::new(Arc::new(DenseQ::new(q)?), need(&a.linear, "c")?, set)?)
}

// ---- train ------------------------------------------------------------------

#[derive(Serialize)]
struct TrainReport<'a> {
    #[serde(flatten)]
    report: &'a SolveReport,
    task: Task,
    n_train: usize,
    support_vectors: usize,
    bias: f64,
    train_metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    warm_start: Option<WarmStart>,
}

#[derive(Serialize)]
struct WarmStart {
    n_freq: usize,
    seconds: f64,
}

fn train_cmd(a: TrainArgs) -> CliResult<Status> {
    validate_solver(&a.solver_opts)?;
    let cfg = svm_config(&a.model)?;
    let ds = load(&a.data)?;
    let pre = fit_preprocess(&ds, cfg.task, a.model.raw_targets)?;
    let set = training_set(&pre, &ds)?;
    let ssn = ssn_options(&a.solver_opts);
    let mut warm = None;
    let x0 = match a.warm_start_rff {
        Some(nf) => {
            let t = std::time::Instant::now();
            let x0 = warm_start_rff(&set, &cfg, nf, cfg.seed, &ssn)?;
            warm = Some(WarmStart {
                n_freq: nf,
                seconds: t.elapsed().as_secs_f64(),
            });
            Some(x0)
        }
        None => None,
    };
    let (mut model, report) = train(&set, &cfg, &alm_options(&a.solver_opts), &ssn, x0.as_deref())?;
    model.preprocess = Some(pre);
    let train_metrics = evaluate(&model, &set)?;
    let summary = TrainReport {
        report: &report,
        task: cfg.task,
        n_train: set.n(),
        support_vectors: model.support_indices.len(),
        bias: model.bias,
        train_metrics,
        warm_start: warm,
    };
    let text = to_json(&summary)?;
    let mut out = Outputs::default();
    out.file(&a.out, serde_json::to_string(&model)?);
    if let Some(p) = &a.report {
        out.file(p, text.clone());
    }
    out.print(text);
    out.flush()?;
    Ok(Status::from(report.converged))
}

// ---- predict ----------------------------------------------------------------

#[derive(Serialize)]
struct PredictSummary {
    #[serde(flatten)]
    metrics: Metrics,
    /// MSE in the original target units when targets were rescaled.
    #[serde(skip_serializing_if = "Option::is_none")]
    mse_raw: Option<f64>,
}

fn predict_cmd(a: PredictArgs) -> CliResult<Status> {
    let model = SvmModel::load(&a.model)?;
    let ds = load(&a.data)?;
    let pre = model
        .preprocess
        .clone()
        .ok_or_else(|| CliError::input("model carries no preprocessing record"))?;
    if ds.q() > pre.features.dim() {
        log::warn!(
            "data has {} features, model was trained on {}; extra features are ignored",
            ds.q(),
            pre.features.dim()
        );
    }
    let (samples, targets) = pre.apply(&ds)?;
    let predictor = model.predictor()?;
    let values = predictor.predict_all(&samples)?;
    let metrics = score(model.config.task, &values, &targets)?;
    let raw: Vec<f64> = values.iter().map(|&v| pre.output(v)).collect();
    let mse_raw = match (model.config.task, pre.targets) {
        (Task::Regression, Some(_)) => {
            let se: f64 = raw.iter().zip(ds.targets()).map(|(p, y)| (p - y) * (p - y)).sum();
            Some(se / raw.len() as f64)
        }
        _ => None,
    };
    let mut out = Outputs::default();
    if let Some(p) = &a.out {
        let mut text = String::new();
        for v in &raw {
            text.push_str(&format!("{v}\n"));
        }
        out.file(p, text);
    }
    out.print(to_json(&PredictSummary { metrics, mse_raw })?);
    out.flush()?;
    Ok(Status::Converged)
}

// ---- cv ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    task: Task,
    kernel: ssnal::kernel::KernelKind,
    #[serde(rename = "C")]
    c: Vec<f64>,
    #[serde(default)]
    alpha: Option<Vec<f64>>,
    #[serde(default)]
    epsilon: Option<Vec<f64>>,
    #[serde(default)]
    approx: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    raw_targets: bool,
}

impl GridSpec {
    fn configs(&self) -> CliResult<Vec<SvmConfig>> {
        let approx: Approx = self.approx.as_deref().unwrap_or("exact").parse()?;
        let alphas = match (self.kernel, &self.alpha) {
            (ssnal::kernel::KernelKind::Linear, _) => vec![1.0],
            (_, Some(v)) => v.clone(),
            (_, None) => return Err(CliError::input("grid: RBF kernel needs \"alpha\"")),
        };
        let eps = match (self.task, &self.epsilon) {
            (Task::Classification, _) => vec![0.0],
            (Task::Regression, Some(v)) => v.clone(),
            (Task::Regression, None) => return Err(CliError::input("grid: regression needs \"epsilon\"")),
        };
        let mut out = Vec::new();
        for &c in &self.c {
            for &alpha in &alphas {
                for &epsilon in &eps {
                    let cfg = SvmConfig {
                        task: self.task,
                        c,
                        kernel: KernelSpec { kind: self.kernel, alpha },
                        epsilon,
                        approx,
                        seed: self.seed,
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::input("grid is empty"));
        }
        Ok(out)
    }
}

fn cv_cmd(a: CvArgs) -> CliResult<Status> {
    validate_solver(&a.solver_opts)?;
    let text = std::fs::read_to_string(&a.grid)
        .map_err(|e| CliError::input(format!("{}: {e}", a.grid.display())))?;
    let spec: GridSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", a.grid.display())))?;
    let grid = spec.configs()?;
    let ds = load(&a.data)?;
    let pre = fit_preprocess(&ds, spec.task, spec.raw_targets)?;
    let set = training_set(&pre, &ds)?;
    let outcome = cross_validate(
        &set,
        &grid,
        a.folds,
        a.seed,
        &alm_options(&a.solver_opts),
        &ssn_options(&a.solver_opts),
    )?;
    let mut out = Outputs::default();
    if let Some(p) = &a.table {
        let mut csv = String::from("task,C,kernel,alpha,epsilon,mean_metric,fold_metrics\n");
        for row in &outcome.table {
            let c = &row.config;
            let folds: Vec<String> = row.fold_metrics.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                task_name(c.task),
                c.c,
                kernel_name(c.kernel),
                c.kernel.alpha,
                c.epsilon,
                row.mean_metric,
                folds.join(";")
            ));
        }
        out.file(p, csv);
    }
    out.print(to_json(&outcome)?);
    out.flush()?;
    Ok(Status::Converged)
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Classification => "csvc",
        Task::Regression => "svr",
    }
}

fn kernel_name(k: KernelSpec) -> &'static str {
    match k.kind {
        ssnal::kernel::KernelKind::Linear => "linear",
        ssnal::kernel::KernelKind::Rbf => "rbf",
    }
}

// ---- bench ------------------------------------------------------------------

#[derive(Serialize)]
struct BenchRow {
    solver: &'static str,
    runs: usize,
    kkt_residual: f64,
    time: f64,
    /// `outer(avg inner)` for ssnal, iterations for apg.
    iterations: String,
    suppvec: f64,
    metric_name: &'static str,
    metric: f64,
    converged: usize,
}

fn bench_cmd(a: BenchArgs) -> CliResult<Status> {
    validate_solver(&a.solver_opts)?;
    if a.repeat == 0 {
        return Err(CliError::input("--repeat must be at least 1"));
    }
    let cfg = svm_config(&a.model)?;
    let full = load(&a.data)?;
    let fixed_test = match &a.test {
        Some(p) => Some(load(p)?),
        None => None,
    };
    // (train, test) per repetition
    let mut splits = Vec::new();
    for k in 0..a.repeat {
        let (tr, te) = match &fixed_test {
            Some(te) => (full.clone(), te.clone()),
            None => split_train_test(&full, a.split, cfg.seed + k as u64)?,
        };
        let pre = fit_preprocess(&tr, cfg.task, a.model.raw_targets)?;
        splits.push((training_set(&pre, &tr)?, training_set(&pre, &te)?));
    }
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &solver in &a.solvers {
        let mut acc = Acc::default();
        for (tr, te) in &splits {
            let problem = build_dual(tr, &cfg)?;
            let report = match solver {
                SolverKind::Ssnal => alm_solve(
                    &problem,
                    &alm_options(&a.solver_opts),
                    &ssn_options(&a.solver_opts),
                    None,
                    None,
                )?,
                SolverKind::Apg => apg_solve(&problem, &apg_options(&a.solver_opts), None)?,
            };
            let model = SvmModel::from_dual(report.x_opt.clone(), tr, &cfg)?;
            acc.add(&report, evaluate(&model, te)?);
            all_converged &= report.converged;
        }
        rows.push(acc.row(solver, cfg.task));
    }
    let mut out = Outputs::default();
    if a.json {
        out.print(to_json(&rows)?);
    } else {
        let mut csv = String::from("solver,runs,kkt_residual,time,iterations,suppvec,metric_name,metric,converged\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{:.3e},{:.3},{},{},{},{},{}\n",
                r.solver, r.runs, r.kkt_residual, r.time, r.iterations, r.suppvec, r.metric_name, r.metric, r.converged
            ));
        }
        out.print(csv.trim_end().to_string());
    }
    out.flush()?;
    Ok(Status::from(all_converged))
}

#[derive(Default)]
struct Acc {
    n: usize,
    rkkt: f64,
    time: f64,
    outer: f64,
    inner: f64,
    supp: f64,
    metric: f64,
    converged: usize,
}

impl Acc {
    fn add(&mut self, r: &SolveReport, m: Metrics) {
        self.n += 1;
        self.rkkt += r.kkt_residual;
        self.time += r.wall_time;
        self.outer += r.outer_iters as f64;
        self.inner += r.avg_inner_iters;
        self.supp += r.unbounded_support_count as f64;
        self.metric += m.accuracy.map(|a| 100.0 * a).or(m.mse).unwrap_or(f64::NAN);
        self.converged += r.converged as usize;
    }

    fn row(&self, solver: SolverKind, task: Task) -> BenchRow {
        let k = self.n as f64;
        let iterations = match solver {
            SolverKind::Ssnal => format!("{:.0}({:.0})", self.outer / k, self.inner / k),
            SolverKind::Apg => format!("{:.0}", self.outer / k),
        };
        BenchRow {
            solver: match solver {
                SolverKind::Ssnal => "ssnal",
                SolverKind::Apg => "apg",
            },
            runs: self.n,
            kkt_residual: self.rkkt / k,
            time: self.time / k,
            iterations,
            suppvec: self.supp / k,
            metric_name: match task {
                Task::Classification => "accuracy_pct",
                Task::Regression => "mse",
            },
            metric: self.metric / k,
            converged: self.converged,
        }
    }
}
