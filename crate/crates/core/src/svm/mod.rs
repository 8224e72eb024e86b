//! C-SVC and ε-SVR on top of the unified quadratic program.

mod svr_operator;

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use svr_operator::SvrOperator;

use crate::data::Preprocess;
use crate::error::{input, Error, Result};
use crate::kernel::{
    nystrom_build, rff_build, KernelKind, KernelOperator, KernelSpec, Samples,
};
use crate::projection::BoxLineSet;
use crate::ssnal::{alm_solve, AlmOptions, QpProblem, SolveReport, SsnOptions};
use crate::vecops::dot;

/// Relative threshold (times `C`) separating zero, free and bound duals.
pub const SUPPORT_TOL: f64 = 1e-6;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// Kernel used to build `Q` during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approx {
    Exact,
    /// Nyström with this many landmarks.
    Nystrom(usize),
    /// Random Fourier features with this many frequencies.
    Rff(usize),
}

impl FromStr for Approx {
    type Err = Error;

    /// `exact`, `nystrom:R` or `rff:N`.
    fn from_str(s: &str) -> Result<Self> {
        let count = |v: &str| -> Result<usize> {
            match v.parse::<usize>() {
                Ok(k) if k > 0 => Ok(k),
                _ => input(format!("invalid approximation size {v:?}")),
            }
        };
        match s.split_once(':') {
            None if s == "exact" => Ok(Approx::Exact),
            Some(("nystrom", r)) => Ok(Approx::Nystrom(count(r)?)),
            Some(("rff", r)) => Ok(Approx::Rff(count(r)?)),
            _ => input(format!("unknown kernel approximation {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    pub task: Task,
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_approx")]
    pub approx: Approx,
    #[serde(default)]
    pub seed: u64,
}

fn default_approx() -> Approx {
    Approx::Exact
}

impl SvmConfig {
    pub fn classification(c: f64, kernel: KernelSpec) -> Self {
        SvmConfig {
            task: Task::Classification,
            c,
            kernel,
            epsilon: 0.0,
            approx: Approx::Exact,
            seed: 0,
        }
    }

    pub fn regression(c: f64, kernel: KernelSpec, epsilon: f64) -> Self {
        SvmConfig {
            task: Task::Regression,
            c,
            kernel,
            epsilon,
            approx: Approx::Exact,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return input(format!("C must be positive, got {}", self.c));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return input(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        self.kernel.validate()?;
        if let Approx::Rff(_) = self.approx {
            if self.kernel.kind != KernelKind::Rbf {
                return input("random Fourier features approximate the RBF kernel only");
            }
        }
        Ok(())
    }
}

/// Training samples with their targets (+1/-1 labels for classification).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: Arc<Samples>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(samples: Samples, targets: Vec<f64>) -> Result<Self> {
        if samples.n() != targets.len() {
            return input(format!("{} samples but {} targets", samples.n(), targets.len()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return input("targets must be finite");
        }
        Ok(TrainingSet {
            samples: Arc::new(samples),
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            samples: Arc::new(self.samples.select(idx)),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Kernel operator used for training under `config.approx`, labels folded in
/// when given.
pub fn training_operator(
    samples: &Arc<Samples>,
    labels: Option<Vec<f64>>,
    config: &SvmConfig,
) -> Result<Arc<KernelOperator>> {
    let exact = KernelOperator::new(samples.clone(), labels.clone(), config.kernel)?;
    let features = match config.approx {
        Approx::Exact => return Ok(Arc::new(exact)),
        Approx::Nystrom(r) => nystrom_build(&exact, r, config.seed)?.features()?,
        Approx::Rff(nf) => {
            rff_build(samples.q(), nf, config.kernel.alpha, config.seed)?.features(samples)?
        }
    };
    Ok(Arc::new(KernelOperator::new(
        Arc::new(features),
        labels,
        KernelSpec::linear(),
    )?))
}

/// `min 1/2 x^T Q x - e^T x` with `Q_ij = y_i y_j K_ij`, `y^T x = 0`, `0 <= x <= C`.
pub fn build_csvc_dual(set: &TrainingSet, config: &SvmConfig) -> Result<QpProblem> {
    config.validate()?;
    let y = &set.targets;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return input("classification labels must be +1 or -1");
    }
    if set.n() < 2 || !(y.contains(&1.0) && y.contains(&-1.0)) {
        return input("classification needs samples from both classes");
    }
    let n = set.n();
    let op = training_operator(&set.samples, Some(y.clone()), config)?;
    let constraint = BoxLineSet::new(y.clone(), 0.0, vec![0.0; n], vec![config.c; n])?;
    QpProblem::new(op, vec![-1.0; n], constraint)
}

/// The ε-SVR dual over `(x; z)`: block operator `[[K, -K], [-K, K]]`,
/// `c = (eps + y; eps - y)`, `sum x - sum z = 0`, `0 <= x, z <= C`.
pub fn build_svr_dual(set: &TrainingSet, config: &SvmConfig) -> Result<QpProblem> {
    config.validate()?;
    let n = set.n();
    if n == 0 {
        return input("empty training set");
    }
    let k = training_operator(&set.samples, None, config)?;
    let op = Arc::new(SvrOperator::new(k));
    let eps = config.epsilon;
    let c: Vec<f64> = set
        .targets
        .iter()
        .map(|y| eps + y)
        .chain(set.targets.iter().map(|y| eps - y))
        .collect();
    let a: Vec<f64> = std::iter::repeat_n(1.0, n).chain(std::iter::repeat_n(-1.0, n)).collect();
    let constraint = BoxLineSet::new(a, 0.0, vec![0.0; 2 * n], vec![config.c; 2 * n])?;
    QpProblem::new(op, c, constraint)
}

pub fn build_dual(set: &TrainingSet, config: &SvmConfig) -> Result<QpProblem> {
    match config.task {
        Task::Classification => build_csvc_dual(set, config),
        Task::Regression => build_svr_dual(set, config),
    }
}

/// Support indices and expansion coefficients: `x_j y_j` for C-SVC,
/// `z_j - x_j` for SVR.
fn expansion_terms(dual_x: &[f64], targets: &[f64], config: &SvmConfig) -> (Vec<usize>, Vec<f64>) {
    let cut = SUPPORT_TOL * config.c;
    let n = targets.len();
    let mut idx = Vec::new();
    let mut coef = Vec::new();
    for j in 0..n {
        match config.task {
            Task::Classification => {
                if dual_x[j] > cut {
                    idx.push(j);
                    coef.push(dual_x[j] * targets[j]);
                }
            }
            Task::Regression => {
                let (x, z) = (dual_x[j], dual_x[n + j]);
                if x > cut || z > cut {
                    idx.push(j);
                    coef.push(z - x);
                }
            }
        }
    }
    (idx, coef)
}

/// Kernel expansion `t -> sum_k coef_k K(sv_k, t)` (without bias).
#[derive(Debug, Clone)]
pub struct Expansion {
    rows: Samples,
    coef: Vec<f64>,
    spec: KernelSpec,
    primal: Option<Vec<f64>>,
}

impl Expansion {
    pub fn new(rows: Samples, coef: Vec<f64>, spec: KernelSpec) -> Self {
        let primal = (spec.kind == KernelKind::Linear).then(|| {
            let mut w = vec![0.0; rows.q()];
            for (k, &ck) in coef.iter().enumerate() {
                crate::vecops::axpy(ck, rows.row(k), &mut w);
            }
            w
        });
        Expansion {
            rows,
            coef,
            spec,
            primal,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.q()
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        if let Some(w) = &self.primal {
            return dot(w, t);
        }
        let sq = dot(t, t);
        let mut s = 0.0;
        for (k, &ck) in self.coef.iter().enumerate() {
            s += ck * self.rows.kernel_with(&self.spec, k, t, sq);
        }
        s
    }
}

/// Multiplier of `a^T x = d` from the KKT conditions at `x`, given the
/// gradient `g = Q x + c`: the mean over free coordinates, else the midpoint
/// of the interval allowed by the bound-active ones.
fn equality_multiplier(x: &[f64], g: &dyn Fn(usize) -> f64, a: &dyn Fn(usize) -> f64, c_box: f64, free_only: Option<&[usize]>) -> f64 {
    let cut = SUPPORT_TOL * c_box;
    let all: Vec<usize>;
    let idx = match free_only {
        Some(f) => f,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &i in idx {
        let ai = a(i);
        if ai == 0.0 {
            continue;
        }
        let r = -g(i) / ai;
        if x[i] > cut && x[i] < c_box - cut {
            sum += r;
            count += 1;
        } else if count == 0 {
            // lower-active wants g + lam a >= 0, upper-active wants <= 0
            let at_lower = x[i] <= cut;
            if at_lower == (ai > 0.0) {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
    }
    if count > 0 {
        return sum / count as f64;
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn free_indices(dual_x: &[f64], c_box: f64) -> Vec<usize> {
    let cut = SUPPORT_TOL * c_box;
    (0..dual_x.len())
        .filter(|&i| dual_x[i] > cut && dual_x[i] < c_box - cut)
        .collect()
}

/// Bias `b` from a solved dual, using the same kernel expansion as
/// prediction.
pub fn recover_bias(dual_x: &[f64], set: &TrainingSet, config: &SvmConfig) -> Result<f64> {
    let n = set.n();
    let expected = match config.task {
        Task::Classification => n,
        Task::Regression => 2 * n,
    };
    if dual_x.is_empty() || dual_x.len() != expected {
        return input(format!("dual vector has length {}, expected {expected}", dual_x.len()));
    }
    let (idx, coef) = expansion_terms(dual_x, &set.targets, config);
    let exp = Expansion::new(set.samples.select(&idx), coef, config.kernel);
    let free = free_indices(dual_x, config.c);
    let pts: Vec<usize> = if free.is_empty() {
        (0..expected).collect()
    } else {
        free.clone()
    };
    // decision values without bias at the needed base points
    let mut base: Vec<usize> = pts.iter().map(|&i| i % n).collect();
    base.sort_unstable();
    base.dedup();
    let vals: Vec<f64> = base
        .par_iter()
        .map(|&i| exp.eval(set.samples.row(i)))
        .collect();
    let f = |i: usize| vals[base.binary_search(&(i % n)).expect("evaluated")];
    let y = &set.targets;
    let free_ref = (!free.is_empty()).then_some(free.as_slice());
    Ok(match config.task {
        Task::Classification => {
            // g_i = y_i f_i - 1, a_i = y_i, and b equals the multiplier
            let g = |i: usize| y[i] * f(i) - 1.0;
            let a = |i: usize| y[i];
            equality_multiplier(dual_x, &g, &a, config.c, free_ref)
        }
        Task::Regression => {
            let eps = config.epsilon;
            let g = |i: usize| {
                if i < n {
                    eps + y[i] - f(i)
                } else {
                    eps - y[i - n] + f(i)
                }
            };
            let a = |i: usize| if i < n { 1.0 } else { -1.0 };
            -equality_multiplier(dual_x, &g, &a, config.c, free_ref)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub config: SvmConfig,
    pub dual_x: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    pub support_coef: Vec<f64>,
    pub support_rows: Vec<Vec<f64>>,
    /// Free duals at the training solution.
    pub unbounded_support_count: usize,
    #[serde(default)]
    pub preprocess: Option<Preprocess>,
}

impl SvmModel {
    /// Assembles a model from a solved dual.
    pub fn from_dual(dual_x: Vec<f64>, set: &TrainingSet, config: &SvmConfig) -> Result<Self> {
        let bias = recover_bias(&dual_x, set, config)?;
        let (idx, coef) = expansion_terms(&dual_x, &set.targets, config);
        let rows = idx.iter().map(|&i| set.samples.row(i).to_vec()).collect();
        let unbounded = free_indices(&dual_x, config.c).len();
        Ok(SvmModel {
            format_version: MODEL_FORMAT_VERSION,
            config: config.clone(),
            dual_x,
            bias,
            support_indices: idx,
            support_coef: coef,
            support_rows: rows,
            unbounded_support_count: unbounded,
            preprocess: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_rows.first().map_or(0, Vec::len)
    }

    pub fn predictor(&self) -> Result<Predictor> {
        let q = self.dim();
        let rows = if self.support_rows.is_empty() {
            Samples::new(0, 0, Vec::new())?
        } else {
            Samples::from_rows(&self.support_rows)?
        };
        Ok(Predictor {
            expansion: Expansion::new(rows, self.support_coef.clone(), self.config.kernel),
            bias: self.bias,
            q,
            task: self.config.task,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: SvmModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return input(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            ));
        }
        Ok(model)
    }
}

/// Ready-to-use decision function of a model.
#[derive(Debug, Clone)]
pub struct Predictor {
    expansion: Expansion,
    bias: f64,
    q: usize,
    task: Task,
}

impl Predictor {
    /// Decision value (classification) or regression estimate.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if self.q != 0 && x.len() != self.q {
            return input(format!("point has {} features, model expects {}", x.len(), self.q));
        }
        if self.q == 0 {
            return Ok(self.bias);
        }
        Ok(self.expansion.eval(x) + self.bias)
    }

    pub fn predict_all(&self, samples: &Samples) -> Result<Vec<f64>> {
        (0..samples.n())
            .into_par_iter()
            .map(|i| self.predict(samples.row(i)))
            .collect()
    }

    pub fn task(&self) -> Task {
        self.task
    }
}

/// Decision value or estimate at one point.
pub fn predict(model: &SvmModel, x_new: &[f64]) -> Result<f64> {
    model.predictor()?.predict(x_new)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
}

impl Metrics {
    /// Accuracy for classification, MSE for regression.
    pub fn value(&self) -> f64 {
        self.accuracy.or(self.mse).unwrap_or(f64::NAN)
    }
}

/// Scores predictions against targets; a zero decision counts as +1.
pub fn score(task: Task, predictions: &[f64], targets: &[f64]) -> Result<Metrics> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return input("need a nonempty set of predictions matching the targets");
    }
    let n = targets.len();
    Ok(match task {
        Task::Classification => {
            let hits = predictions
                .iter()
                .zip(targets)
                .filter(|(p, y)| (if **p >= 0.0 { 1.0 } else { -1.0 }) == **y)
                .count();
            Metrics {
                n,
                accuracy: Some(hits as f64 / n as f64),
                mse: None,
            }
        }
        Task::Regression => {
            let se: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum();
            Metrics {
                n,
                accuracy: None,
                mse: Some(se / n as f64),
            }
        }
    })
}

pub fn evaluate(model: &SvmModel, test: &TrainingSet) -> Result<Metrics> {
    let pred = model.predictor()?.predict_all(&test.samples)?;
    score(model.config.task, &pred, &test.targets)
}

/// Solves the dual (optionally from `x0`) and builds the model.
pub fn train(
    set: &TrainingSet,
    config: &SvmConfig,
    alm: &AlmOptions,
    ssn: &SsnOptions,
    x0: Option<&[f64]>,
) -> Result<(SvmModel, SolveReport)> {
    let problem = build_dual(set, config)?;
    let report = alm_solve(&problem, alm, ssn, x0, None)?;
    let model = SvmModel::from_dual(report.x_opt.clone(), set, config)?;
    log::debug!(
        "trained task={:?} n={} sv={} free={} bias={}",
        config.task,
        set.n(),
        model.support_indices.len(),
        model.unbounded_support_count,
        model.bias
    );
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub config: SvmConfig,
    pub fold_metrics: Vec<f64>,
    pub mean_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best_index: usize,
    pub best: SvmConfig,
    pub table: Vec<CvRow>,
}

/// Seeded partition of `0..n` into `folds` groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (k, i) in perm.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// k-fold cross-validation over a grid; folds run in parallel and the
/// reduction is in grid order.
pub fn cross_validate(
    set: &TrainingSet,
    grid: &[SvmConfig],
    folds: usize,
    seed: u64,
    alm: &AlmOptions,
    ssn: &SsnOptions,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return input("parameter grid is empty");
    }
    if folds < 2 || set.n() < folds {
        return input(format!("need 2 <= folds <= n, got folds={folds}, n={}", set.n()));
    }
    let task = grid[0].task;
    if grid.iter().any(|c| c.task != task) {
        return input("grid mixes classification and regression");
    }
    for c in grid {
        c.validate()?;
    }
    let parts = fold_assignment(set.n(), folds, seed);
    let splits: Vec<(TrainingSet, TrainingSet)> = parts
        .iter()
        .map(|held| {
            let mut mask = vec![false; set.n()];
            held.iter().for_each(|&i| mask[i] = true);
            let train: Vec<usize> = (0..set.n()).filter(|&i| !mask[i]).collect();
            (set.subset(&train), set.subset(held))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..folds).map(move |f| (g, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (tr, te) = &splits[f];
            let (model, _) = train(tr, &grid[g], alm, ssn, None)?;
            Ok(evaluate(&model, te)?.value())
        })
        .collect::<Result<_>>()?;
    let table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(g, config)| {
            let fold_metrics = scores[g * folds..(g + 1) * folds].to_vec();
            let mean_metric = fold_metrics.iter().sum::<f64>() / folds as f64;
            CvRow {
                config: config.clone(),
                fold_metrics,
                mean_metric,
            }
        })
        .collect();
    let better = |a: &CvRow, b: &CvRow| -> bool {
        let (ma, mb) = (a.mean_metric, b.mean_metric);
        let strictly = match task {
            Task::Classification => ma > mb,
            Task::Regression => ma < mb,
        };
        if strictly {
            return true;
        }
        if ma != mb {
            return false;
        }
        (a.config.c, a.config.kernel.alpha) < (b.config.c, b.config.kernel.alpha)
    };
    let mut best_index = 0;
    for g in 1..table.len() {
        if better(&table[g], &table[best_index]) {
            best_index = g;
        }
    }
    Ok(CvOutcome {
        best_index,
        best: table[best_index].config.clone(),
        table,
    })
}
