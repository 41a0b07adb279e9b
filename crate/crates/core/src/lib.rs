//! Binary-response regression built on the hinge-loss probability model
//!
//! ```text
//! P(Y = y | x) = exp(-[1 - y*t]+) / (exp(-[1 - t]+) + exp(-[1 + t]+)),   t = alpha + x'beta
//! ```
//!
//! normalizing the soft-margin SVM loss over the two labels. The crate provides:
//!
//! - [`model`]: the density, its log, exact piecewise-analytic first and second
//!   derivatives, MAP prediction, and a polynomial-kernel feature map;
//! - [`optimizer`]: a nonsmooth-aware BFGS with weak-Wolfe line search and
//!   multi-start drivers for the MLE, the concave approximate MLE (pure hinge
//!   loss), and the ridge-penalized SVM objective;
//! - [`inference`]: misspecification-robust sandwich covariance, Wald tests,
//!   and MLE-existence diagnostics;
//! - [`baselines`]: logistic regression by damped Newton with its own sandwich
//!   standard errors, plus the plain sign-rule predictors;
//! - [`simulate`]: seeded data generators, Monte-Carlo MSE and accuracy
//!   experiment drivers, and k-fold cross-validation.
//!
//! # Example
//!
//! ```
//! use rand::SeedableRng;
//! use svmreg::{fit_mle, gen_model_data, predict_map, robust_inference, OptOptions, Theta};
//!
//! let truth = Theta::new(1.0, vec![1.0]).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let data = gen_model_data(500, 1, &truth, &mut rng).unwrap();
//!
//! let opts = OptOptions { n_starts: 3, ..OptOptions::default() };
//! let fit = fit_mle(&data, &opts).unwrap();
//! assert!(fit.converged);
//! assert!(fit.theta_hat.squared_distance(&truth) < 0.5);
//!
//! let inference = robust_inference(&data, &fit.theta_hat).unwrap();
//! assert!(inference.se.iter().all(|&s| s > 0.0));
//!
//! let label = predict_map(&[2.0], &fit.theta_hat).unwrap();
//! assert_eq!(label.sign(), 1.0);
//! ```

pub mod baselines;
pub mod inference;
pub mod model;
pub mod optimizer;
pub mod simulate;
pub mod stats;

pub use baselines::{fit_logistic, logistic_sandwich, predict_logistic, predict_svm, LogisticFit};
pub use inference::{
    check_existence, estimate_a, estimate_b, robust_inference, sandwich_cov, wald_test,
    ExistenceReport, InferenceReport,
};
pub use model::{
    density, expected_neg_log_density, grad_log_density, hessian_log_density, hinge, log_density,
    log_likelihood, margin, poly_features, predict_map, Dataset, Label, LabeledSample, Margin,
    PolyMap, Theta,
};
pub use optimizer::{
    fit_approximate, fit_mle, fit_svm, minimize_bfgs, minimize_multistart, BfgsOutcome, FitResult,
    MultiStartOutcome, OptOptions, Termination,
};
pub use simulate::{
    gen_mixture_data, gen_model_data, kfold_cv, run_accuracy_experiment, run_mse_experiment,
    AccConfig, CellSummary, CvOutcome, ExperimentReport, Method, MseConfig,
};

/// Errors surfaced by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset must contain at least one sample")]
    EmptyDataset,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("objective not finite at the initial point")]
    NonFiniteObjective,
    #[error("all optimizer starts failed")]
    AllStartsFailed,
    #[error("matrix is singular or ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("standard error is zero at coordinate {0}")]
    ZeroStandardError(usize),
    #[error("Newton system is singular")]
    SingularNewton,
    #[error("dataset contains a single label class")]
    SingleClass,
    #[error("polynomial degree must be at least 1")]
    ZeroPolyDegree,
    #[error("expanded feature dimension {dim} exceeds the cap {cap}")]
    PolyDimensionCap { dim: usize, cap: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
