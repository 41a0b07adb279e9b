//! `svmreg`: fit the hinge-loss probability model and its comparators over
//! CSV data, draw robust inference, predict, run the Monte-Carlo studies, and
//! cross-validate.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod commands;
mod csvio;
mod report;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "svmreg", version, about = "SVM-based binary-response probability model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SchemaArgs {
    /// Name of the label column (values -1/1, or 0/1 mapped to -1/+1)
    #[arg(long, default_value = "y")]
    pub label_col: String,
    /// Comma-separated feature columns; all remaining columns when omitted
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and report estimates (with robust inference for
    /// svmreg/logistic)
    Fit {
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// Model: svmreg, logistic, svm, or approx
        #[arg(long, default_value = "svmreg")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of optimizer restarts
        #[arg(long, default_value_t = 10)]
        starts: usize,
        /// Ridge weight for the svm model (default 1/n)
        #[arg(long)]
        lambda: Option<f64>,
        /// Polynomial kernel constant (used with --poly-u)
        #[arg(long, default_value_t = 1.0)]
        poly_c: f64,
        /// Polynomial kernel degree; enables the explicit feature expansion
        #[arg(long)]
        poly_u: Option<u32>,
        /// Write the JSON report here (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict labels (and posterior probabilities where available) from a
    /// fit report
    Predict {
        /// JSON report produced by `fit`
        report: PathBuf,
        input: PathBuf,
        /// Write predictions CSV here (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo study (mse or acc) and print its table
    Simulate {
        /// Study: mse or acc
        #[arg(long)]
        study: String,
        /// JSON config file; explicit flags override its fields
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        d_grid: Option<Vec<usize>>,
        /// Overlap levels for the acc study
        #[arg(long, value_delimiter = ',')]
        omega_grid: Option<Vec<f64>>,
        /// Test points per replication (acc study)
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validated accuracy over a shared partition
    Cv {
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Comma-separated methods: svmreg, logistic, svm, approx
        #[arg(long, value_delimiter = ',', default_value = "svmreg,svm")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        /// Ridge weight for the svm method (default 1/n of each training split)
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Existence diagnostics for the MLE on a dataset
    Check {
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
    },
}

/// Errors carrying their process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag combinations or values: exit 2.
    Usage(String),
    /// Unreadable, malformed, or schema-violating data: exit 3.
    Data(String),
    /// Numerical failure (singular systems, failed fits): exit 4.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<svmreg::Error> for CliError {
    fn from(e: svmreg::Error) -> Self {
        use svmreg::Error::*;
        match e {
            InvalidOptions(_) | InvalidConfig(_) | ZeroPolyDegree | PolyDimensionCap { .. } => {
                CliError::Usage(e.to_string())
            }
            NonFiniteObjective | AllStartsFailed | IllConditioned { .. }
            | ZeroStandardError(_) | SingularNewton => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("SVMREG_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    init_thread_pool();
    if let Err(e) = commands::run(cli.command) {
        eprintln!("{e}");
        std::process::exit(e.code());
    }
}
