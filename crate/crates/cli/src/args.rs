use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssnal", version, about = "Semismooth Newton ALM solver for SVM quadratic programs")]
pub struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads. Defaults to SSNAL_NUM_THREADS, then RAYON_NUM_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one quadratic program and print the report as JSON.
    SolveQp(SolveQpArgs),
    /// Train a C-SVC or SVR model on a LIBSVM file.
    Train(TrainArgs),
    /// Apply a saved model to a LIBSVM file.
    Predict(PredictArgs),
    /// k-fold cross-validation over a parameter grid.
    Cv(CvArgs),
    /// Compare solvers on one training problem.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Ssnal,
    Apg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Csvc,
    Svr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// KKT residual tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Outer iteration cap of the augmented Lagrangian loop.
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    /// Newton iteration cap per subproblem.
    #[arg(long, default_value_t = 50)]
    pub max_inner: usize,
    /// Initial penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    /// Iteration cap of the projected-gradient baseline.
    #[arg(long, default_value_t = 20_000)]
    pub apg_max_iters: usize,
}

/// SVM problem parameters shared by the data-driven commands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = TaskArg::Csvc)]
    pub task: TaskArg,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    /// RBF width: K(x, y) = exp(-|x - y|^2 / (2 alpha)).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// SVR insensitivity.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Kernel used for training: exact, nystrom:R or rff:N.
    #[arg(long, default_value = "exact")]
    pub approx: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep SVR targets in their original units instead of mapping them onto [0, 1].
    #[arg(long)]
    pub raw_targets: bool,
}

#[derive(Debug, Args)]
pub struct SolveQpArgs {
    /// Dense Q as CSV (one row per line).
    #[arg(long, requires_all = ["linear", "a", "l", "u"], conflicts_with = "dataset")]
    pub data: Option<PathBuf>,
    /// Linear term as CSV.
    #[arg(long = "c", id = "linear")]
    pub linear: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub d: f64,
    #[arg(long)]
    pub l: Option<PathBuf>,
    #[arg(long)]
    pub u: Option<PathBuf>,
    /// LIBSVM file; the problem is the SVM dual with an implicit kernel operator.
    #[arg(long, required_unless_present = "data")]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Starting point as CSV.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolverKind::Ssnal)]
    pub solver: SolverKind,
    #[command(flatten)]
    pub solver_opts: SolverArgs,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Warm start an exact RBF solve from a random-feature solve with N frequencies (2N features).
    #[arg(long, value_name = "N")]
    pub warm_start_rff: Option<usize>,
    #[command(flatten)]
    pub solver_opts: SolverArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the training report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions, one per line, in the original label or target units.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON grid: {"task", "kernel", "C": [...], "alpha": [...], "epsilon": [...]}.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver_opts: SolverArgs,
    /// Write the per-configuration table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Training data (LIBSVM).
    #[arg(long)]
    pub data: PathBuf,
    /// Test data; without it the training file is split with --split.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Training fraction of the random split.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated solvers to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ssnal,apg")]
    pub solvers: Vec<SolverKind>,
    /// Repetitions; with a random split each repetition uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[command(flatten)]
    pub solver_opts: SolverArgs,
    /// Print the table as JSON rows instead of CSV.
    #[arg(long)]
    pub json: bool,
}
