//! `svb`: simulate, fit and summarize sparse Bayesian Cox models.

mod commands;
mod model_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Process exit codes.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NOT_CONVERGED: u8 = 4;
    pub const NUMERIC: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] survival_svb::Error),
    #[error("{0}")]
    Io(String),
    /// Outputs were written, but the fit stopped at the iteration cap.
    #[error("fit did not converge within {0} iterations")]
    NotConverged(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        use survival_svb::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::NotConverged(_) => exit::NOT_CONVERGED,
            CliError::Io(_) => exit::DATA,
            CliError::Core(e) if e.is_numeric() => exit::NUMERIC,
            CliError::Core(E::InvalidParameter(_)) => exit::USAGE,
            CliError::Core(_) => exit::DATA,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "svb", version, about = "Sparse variational Bayes for Cox proportional hazards models")]
struct Cli {
    /// Worker threads for parallel commands (defaults to all cores).
    #[arg(long, global = true, env = "SVB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset with known coefficients.
    Simulate(SimulateArgs),
    /// Fit the variational posterior by coordinate ascent.
    Fit(FitArgs),
    /// Run the reference Metropolis-within-Gibbs sampler.
    Mcmc(McmcArgs),
    /// Goodness of fit of a fitted model on a dataset.
    Gof(GofArgs),
    /// K-fold cross-validated grid search over λ and a0.
    Cv(CvArgs),
    /// Select features with Bayesian false discovery rate control.
    Select(SelectArgs),
    /// Pairwise posterior risk probabilities between two patient groups.
    CompareRisk(CompareRiskArgs),
    /// Accuracy metrics of a fit against a simulated truth.
    Evaluate(EvaluateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum SettingKind {
    Independent,
    Block,
    External,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Number of nonzero coefficients.
    #[arg(long)]
    pub s: usize,
    /// Censoring proportion.
    #[arg(long, default_value_t = 0.25)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = SettingKind::Independent)]
    pub setting: SettingKind,
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    #[arg(long, default_value_t = 50)]
    pub block_size: usize,
    /// Covariate CSV for `--setting external`; its first n rows are used.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub coef_low: f64,
    #[arg(long, default_value_t = 2.0)]
    pub coef_high: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PriorArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
    /// Defaults to the number of features.
    #[arg(long)]
    pub b0: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct PrepArgs {
    /// Subtract column means from the covariates.
    #[arg(long)]
    pub center: bool,
    /// Drop features whose coefficient of variation is below the median.
    #[arg(long)]
    pub filter_cv: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum InitKind {
    Lasso,
    Ridge,
    Zero,
    File,
}

#[derive(Args, Debug, Clone)]
pub struct FitControlArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Lasso)]
    pub init: InitKind,
    /// JSON array (or object with a `mu` array) for `--init file`.
    #[arg(long)]
    pub init_file: Option<PathBuf>,
    /// Initializer penalty as a fraction of the smallest penalty that zeroes every coefficient.
    #[arg(long, default_value_t = 0.01)]
    pub init_penalty: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub control: FitControlArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    /// Record a Monte Carlo ELBO with this many draws at every sweep.
    #[arg(long)]
    pub elbo_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct McmcArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Posterior summaries, in the same layout as `fit.json`.
    #[arg(long, default_value = "mcmc.json")]
    pub out: PathBuf,
    /// Long-format draws CSV; with several chains one file per chain.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0.2)]
    pub sigma_k: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_s: f64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "fit.json")]
    pub fit: PathBuf,
    #[arg(long, default_value = "gof.json")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Also report the log predictive density score.
    #[arg(long)]
    pub lpds: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub a0_grid: Vec<f64>,
    /// Defaults to the number of features.
    #[arg(long)]
    pub b0: Option<f64>,
    #[command(flatten)]
    pub control: FitControlArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub lpds: bool,
    /// Per-fold table.
    #[arg(long, default_value = "cv.csv")]
    pub out: PathBuf,
    /// Per-cell means and the recommended cell.
    #[arg(long, default_value = "cv.json")]
    pub summary: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum RuleKind {
    Smallest,
    Largest,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long, default_value = "fit.json")]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Which admissible threshold to report.
    #[arg(long, value_enum, default_value_t = RuleKind::Smallest)]
    pub rule: RuleKind,
    #[arg(long, default_value = "select.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareRiskArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "fit.json")]
    pub fit: PathBuf,
    /// Low-risk group, as 1-based data row numbers.
    #[arg(long, value_delimiter = ',', required_unless_present = "median_split")]
    pub low: Vec<usize>,
    /// High-risk group, as 1-based data row numbers.
    #[arg(long, value_delimiter = ',', required_unless_present = "median_split")]
    pub high: Vec<usize>,
    /// Split the patients at the median posterior prognostic index instead.
    #[arg(long, conflicts_with_all = ["low", "high"])]
    pub median_split: bool,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "risk.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// `fit.json` or `mcmc.json`.
    #[arg(long, default_value = "fit.json")]
    pub fit: PathBuf,
    #[arg(long, default_value = "truth.json")]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Inclusion at or above which the credible set is a plain interval.
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Mcmc(a) => commands::mcmc(a),
        Command::Gof(a) => commands::gof(a),
        Command::Cv(a) => commands::cv(a),
        Command::Select(a) => commands::select(a),
        Command::CompareRisk(a) => commands::compare_risk(a),
        Command::Evaluate(a) => commands::evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
