//! Seeded data generators, Monte-Carlo experiment drivers, and k-fold
//! cross-validation.
//!
//! Every replication draws from an RNG stream derived from the experiment
//! seed and the cell coordinates, so cells can run in any order or in
//! parallel and the assembled report is a pure function of its configuration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::baselines::fit_logistic;
use crate::model::{density_at, margin, predict_map, Dataset, Label, LabeledSample, Theta};
use crate::optimizer::{fit_approximate, fit_mle, fit_svm, OptOptions};
use crate::stats::{derive_seed, mean, normal_quantile, sample_sd};
use crate::{Error, Result};

const STREAM_MSE_DATA: u64 = 0x11;
const STREAM_MSE_FIT: u64 = 0x12;
const STREAM_ACC_TRAIN: u64 = 0x21;
const STREAM_ACC_TEST: u64 = 0x22;
const STREAM_ACC_FIT: u64 = 0x23;

/// Draw a dataset from the hinge model itself: covariates are i.i.d. standard
/// normal and labels follow `P(Y = +1 | x) = f(+1 | x; theta0)`.
pub fn gen_model_data(n: usize, d: usize, theta0: &Theta, rng: &mut impl Rng) -> Result<Dataset> {
    if theta0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: theta0.dim() });
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let t = margin(&x, theta0)?.0;
        let p_pos = density_at(Label::Pos, t);
        let u: f64 = rng.gen();
        let y = if u < p_pos { Label::Pos } else { Label::Neg };
        samples.push(LabeledSample::new(x, y)?);
    }
    Dataset::new(samples)
}

/// Two-component spherical Gaussian mixture with pairwise misclassification
/// overlap exactly `omega_bar`.
///
/// Components have unit covariance and means at `+/-(delta/2) e1` with
/// `delta = -2 * Phi^{-1}(omega_bar / 2)`; labels equal the component. The
/// Bayes rule is `sign(x_1)` with accuracy `1 - omega_bar / 2`.
pub fn gen_mixture_data(
    n: usize,
    d: usize,
    omega_bar: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if !(omega_bar > 0.0 && omega_bar < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "overlap must lie in (0, 1), got {omega_bar}"
        )));
    }
    let delta = mixture_separation(omega_bar);
    let half = delta / 2.0;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let y = if rng.gen::<f64>() < 0.5 { Label::Pos } else { Label::Neg };
        let shift = y.sign() * half;
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                if j == 0 {
                    z + shift
                } else {
                    z
                }
            })
            .collect();
        samples.push(LabeledSample::new(x, y)?);
    }
    Dataset::new(samples)
}

/// Distance between mixture means achieving overlap `omega_bar`.
pub fn mixture_separation(omega_bar: f64) -> f64 {
    -2.0 * normal_quantile(omega_bar / 2.0)
}

/// Configuration of the mean-squared-error study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseConfig {
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub replications: usize,
    /// Generating parameters; `None` means the all-ones vector per dimension.
    pub theta0: Option<Theta>,
    pub seed: u64,
    pub opt: OptOptions,
}

impl Default for MseConfig {
    fn default() -> Self {
        MseConfig {
            n_grid: vec![100, 200, 500, 1000, 2000],
            d_grid: vec![1, 5, 10],
            replications: 100,
            theta0: None,
            seed: 0,
            opt: OptOptions::default(),
        }
    }
}

impl MseConfig {
    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.d_grid.is_empty() {
            return Err(Error::InvalidConfig("grids must be non-empty".into()));
        }
        if self.n_grid.iter().any(|&n| n == 0) || self.d_grid.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("grid values must be positive".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if let Some(theta) = &self.theta0 {
            if self.d_grid.iter().any(|&d| d != theta.dim()) {
                return Err(Error::InvalidConfig(
                    "explicit theta0 requires a d_grid matching its dimension".into(),
                ));
            }
        }
        self.opt.validate()
    }

    fn theta0_for(&self, d: usize) -> Theta {
        self.theta0.clone().unwrap_or_else(|| Theta::ones(d))
    }
}

/// Configuration of the prediction-accuracy study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccConfig {
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub omega_grid: Vec<f64>,
    /// Fresh test points per replication.
    pub test_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub opt: OptOptions,
    /// Ridge weight for the SVM comparator; `None` means 1/n.
    pub svm_lambda: Option<f64>,
}

impl Default for AccConfig {
    fn default() -> Self {
        AccConfig {
            n_grid: vec![100, 1000],
            d_grid: vec![2, 5],
            omega_grid: vec![0.05, 0.5],
            test_size: 1000,
            replications: 100,
            seed: 0,
            opt: OptOptions::default(),
            svm_lambda: None,
        }
    }
}

impl AccConfig {
    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.d_grid.is_empty() || self.omega_grid.is_empty() {
            return Err(Error::InvalidConfig("grids must be non-empty".into()));
        }
        if self.omega_grid.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(Error::InvalidConfig("overlap values must lie in (0, 1)".into()));
        }
        if self.test_size == 0 || self.replications == 0 {
            return Err(Error::InvalidConfig("test_size and replications must be positive".into()));
        }
        self.opt.validate()
    }
}

/// One (cell, method) summary inside an [`ExperimentReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub d: usize,
    /// "model" for the MSE study, "omega=..." for the accuracy study.
    pub scenario: String,
    pub method: String,
    /// Cell MSE or mean accuracy.
    pub mean: f64,
    pub sd: f64,
    /// Replications that produced a value.
    pub r_effective: usize,
    /// Replications whose fit did not report convergence (still included).
    pub n_nonconverged: usize,
    /// Raw per-replication values for dispersion analysis.
    pub per_replication: Vec<f64>,
}

/// Wall-clock per cell; informational only and excluded from determinism
/// comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellTiming {
    pub cell: String,
    pub ms: u64,
}

/// Assembled Monte-Carlo study results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub study: String,
    pub seed: u64,
    /// How per-replication RNG streams derive from the seed.
    pub seed_derivation: String,
    pub cells: Vec<CellSummary>,
    pub timings_ms: Vec<CellTiming>,
}

impl ExperimentReport {
    /// The summary for a given cell and method, if present.
    pub fn cell(&self, n: usize, d: usize, scenario: &str, method: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.d == d && c.scenario == scenario && c.method == method)
    }

    /// Copy with timing information cleared, for determinism comparisons.
    pub fn without_timings(&self) -> ExperimentReport {
        ExperimentReport { timings_ms: Vec::new(), ..self.clone() }
    }
}

const SEED_DERIVATION: &str = "splitmix64(seed, [stream, n, d, omega_bits, r])";

/// Run the MSE study: for every `(n, d)` cell, `R` replications of
/// generate-then-fit, recording the squared parameter error of each fit.
///
/// Nonconvergent fits are included in the MSE; replications that error out
/// entirely are dropped from the cell and counted via `r_effective`.
pub fn run_mse_experiment(cfg: &MseConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = cfg
        .d_grid
        .iter()
        .flat_map(|&d| cfg.n_grid.iter().map(move |&n| (n, d)))
        .collect();

    let results: Vec<(CellSummary, CellTiming)> = cells
        .par_iter()
        .map(|&(n, d)| {
            let started = Instant::now();
            let theta0 = cfg.theta0_for(d);
            let reps: Vec<Option<(f64, bool)>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.seed,
                        &[STREAM_MSE_DATA, n as u64, d as u64, 0, r as u64],
                    ));
                    let data = gen_model_data(n, d, &theta0, &mut rng).ok()?;
                    let opts = cfg.opt.clone().with_seed(derive_seed(
                        cfg.seed,
                        &[STREAM_MSE_FIT, n as u64, d as u64, 0, r as u64],
                    ));
                    let fit = fit_mle(&data, &opts).ok()?;
                    Some((fit.theta_hat.squared_distance(&theta0), fit.converged))
                })
                .collect();

            let values: Vec<f64> = reps.iter().flatten().map(|(v, _)| *v).collect();
            let n_nonconverged = reps.iter().flatten().filter(|(_, c)| !c).count();
            let summary = CellSummary {
                n,
                d,
                scenario: "model".into(),
                method: "mle".into(),
                mean: mean(&values),
                sd: sample_sd(&values),
                r_effective: values.len(),
                n_nonconverged,
                per_replication: values,
            };
            let timing = CellTiming {
                cell: format!("n={n},d={d},scenario=model"),
                ms: started.elapsed().as_millis() as u64,
            };
            (summary, timing)
        })
        .collect();

    let (cells, timings_ms) = results.into_iter().unzip();
    Ok(ExperimentReport {
        study: "mse".into(),
        seed: cfg.seed,
        seed_derivation: SEED_DERIVATION.into(),
        cells,
        timings_ms,
    })
}

/// The classifiers compared throughout the experiments and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Hinge-model MLE with MAP prediction.
    SvmReg,
    /// Logistic regression.
    Logistic,
    /// Soft-margin SVM (ridge-penalized hinge).
    Svm,
    /// Concave approximate MLE (pure hinge loss).
    Approx,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SvmReg => "svmreg",
            Method::Logistic => "logistic",
            Method::Svm => "svm",
            Method::Approx => "approx",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svmreg" => Ok(Method::SvmReg),
            "logistic" => Ok(Method::Logistic),
            "svm" => Ok(Method::Svm),
            "approx" => Ok(Method::Approx),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Fit one method and return the linear parameters it predicts with.
///
/// Every method here predicts by the sign rule on its fitted margin, so a
/// plain `Theta` is the complete trained state.
pub fn train_method(
    method: Method,
    data: &Dataset,
    opts: &OptOptions,
    svm_lambda: Option<f64>,
) -> Result<Theta> {
    match method {
        Method::SvmReg => Ok(fit_mle(data, opts)?.theta_hat),
        Method::Logistic => Ok(fit_logistic(data)?.theta_tilde),
        Method::Svm => {
            let lambda = svm_lambda.unwrap_or(1.0 / data.n() as f64);
            fit_svm(data, lambda, opts)
        }
        Method::Approx => Ok(fit_approximate(data, opts)?.theta_hat),
    }
}

/// Fraction of `data` classified correctly by the sign rule on `theta`.
pub fn accuracy(data: &Dataset, theta: &Theta) -> Result<f64> {
    let mut correct = 0usize;
    for s in data.iter() {
        if predict_map(&s.x, theta)? == s.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.n() as f64)
}

/// Run the accuracy study: per `(n, d, omega)` cell and replication, train
/// all three comparators on `n` mixture points and score them on a fresh
/// test set of `test_size` points from the same process.
pub fn run_accuracy_experiment(cfg: &AccConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let methods = [Method::SvmReg, Method::Logistic, Method::Svm];
    let cells: Vec<(usize, usize, f64)> = cfg
        .omega_grid
        .iter()
        .flat_map(|&w| {
            cfg.d_grid
                .iter()
                .flat_map(move |&d| cfg.n_grid.iter().map(move |&n| (n, d, w)))
        })
        .collect();

    let results: Vec<(Vec<CellSummary>, CellTiming)> = cells
        .par_iter()
        .map(|&(n, d, omega)| {
            let started = Instant::now();
            let wbits = omega.to_bits();
            // per replication: one Option<accuracy> and a convergence flag per method
            let reps: Vec<Vec<(Option<f64>, bool)>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let r = r as u64;
                    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.seed,
                        &[STREAM_ACC_TRAIN, n as u64, d as u64, wbits, r],
                    ));
                    let mut test_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.seed,
                        &[STREAM_ACC_TEST, n as u64, d as u64, wbits, r],
                    ));
                    let train = gen_mixture_data(n, d, omega, &mut train_rng);
                    let test = gen_mixture_data(cfg.test_size, d, omega, &mut test_rng);
                    let (train, test) = match (train, test) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => return vec![(None, false); methods.len()],
                    };
                    let opts = cfg.opt.clone().with_seed(derive_seed(
                        cfg.seed,
                        &[STREAM_ACC_FIT, n as u64, d as u64, wbits, r],
                    ));
                    methods
                        .iter()
                        .map(|&m| match train_method(m, &train, &opts, cfg.svm_lambda) {
                            Ok(theta) => (accuracy(&test, &theta).ok(), true),
                            Err(_) => (None, false),
                        })
                        .collect()
                })
                .collect();

            let summaries = methods
                .iter()
                .enumerate()
                .map(|(mi, &m)| {
                    let values: Vec<f64> =
                        reps.iter().filter_map(|row| row[mi].0).collect();
                    let n_nonconverged =
                        reps.iter().filter(|row| !row[mi].1).count();
                    CellSummary {
                        n,
                        d,
                        scenario: format!("omega={omega}"),
                        method: m.name().into(),
                        mean: mean(&values),
                        sd: sample_sd(&values),
                        r_effective: values.len(),
                        n_nonconverged,
                        per_replication: values,
                    }
                })
                .collect();
            let timing = CellTiming {
                cell: format!("n={n},d={d},scenario=omega={omega}"),
                ms: started.elapsed().as_millis() as u64,
            };
            (summaries, timing)
        })
        .collect();

    let mut cells_out = Vec::new();
    let mut timings_ms = Vec::new();
    for (summaries, timing) in results {
        cells_out.extend(summaries);
        timings_ms.push(timing);
    }
    Ok(ExperimentReport {
        study: "acc".into(),
        seed: cfg.seed,
        seed_derivation: SEED_DERIVATION.into(),
        cells: cells_out,
        timings_ms,
    })
}

/// Randomly partition `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k must be at least 2".into()));
    }
    if n < k {
        return Err(Error::InvalidConfig(format!("need at least k = {k} samples, got {n}")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in indices.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    Ok(folds)
}

/// Cross-validation summary for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOutcome {
    pub acc_mean: f64,
    pub acc_sd: f64,
    pub fold_accuracies: Vec<f64>,
    /// Folds whose training complement lost a label class, flagged and
    /// excluded from the summary.
    pub excluded_folds: Vec<usize>,
}

/// k-fold cross-validated accuracy with a fresh random partition.
pub fn kfold_cv(
    data: &Dataset,
    k: usize,
    method: Method,
    rng: &mut impl Rng,
    opts: &OptOptions,
) -> Result<CvOutcome> {
    let partition = kfold_partition(data.n(), k, rng)?;
    kfold_cv_with_partition(data, &partition, method, opts, None)
}

/// k-fold cross-validation over a caller-supplied partition, so several
/// methods can share the exact same folds.
pub fn kfold_cv_with_partition(
    data: &Dataset,
    partition: &[Vec<usize>],
    method: Method,
    opts: &OptOptions,
    svm_lambda: Option<f64>,
) -> Result<CvOutcome> {
    let mut fold_accuracies = Vec::with_capacity(partition.len());
    let mut excluded_folds = Vec::new();
    for (fi, fold) in partition.iter().enumerate() {
        let train_idx: Vec<usize> = partition
            .iter()
            .enumerate()
            .filter(|(fj, _)| *fj != fi)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let train = data.subset(&train_idx)?;
        let has_pos = train.labels().any(|y| y == Label::Pos);
        let has_neg = train.labels().any(|y| y == Label::Neg);
        if !(has_pos && has_neg) {
            excluded_folds.push(fi);
            continue;
        }
        let test = data.subset(fold)?;
        let theta = train_method(method, &train, opts, svm_lambda)?;
        fold_accuracies.push(accuracy(&test, &theta)?);
    }
    Ok(CvOutcome {
        acc_mean: mean(&fold_accuracies),
        acc_sd: sample_sd(&fold_accuracies),
        fold_accuracies,
        excluded_folds,
    })
}
