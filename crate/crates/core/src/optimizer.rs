//! Quasi-Newton optimization and the model-fitting drivers.
//!
//! The mean log-likelihood of the hinge model is nonconcave and
//! nondifferentiable, but plain BFGS paired with a weak-Wolfe line search is
//! known to behave well on such objectives. The line search is the
//! Lewis-Overton bisection bracket: sufficient decrease with `c1` plus the
//! one-sided curvature condition `g(x + a d)'d >= c2 g(x)'d`, which a
//! nonsmooth objective can always satisfy where the strong-Wolfe form cannot.
//!
//! Fitting runs from several starting points (the first at the origin, the
//! rest standard-normal draws) and keeps the best terminal point; the mean
//! log-likelihood routinely has multiple local maxima.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::inference;
use crate::model::{log_density_dt, log_likelihood, Dataset, Theta};
use crate::stats::derive_seed;
use crate::{Error, Result};

/// Options shared by [`minimize_bfgs`] and the multi-start fit drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptOptions {
    /// BFGS iteration cap per start.
    pub max_iter: usize,
    /// Terminate when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Terminate when the relative objective change stalls below this.
    /// Nonsmooth optima may never produce small gradients, so this criterion
    /// carries real weight.
    pub f_tol: f64,
    /// Sufficient-decrease constant.
    pub wolfe_c1: f64,
    /// Curvature constant.
    pub wolfe_c2: f64,
    /// Number of starting points.
    pub n_starts: usize,
    /// Scale of the Gaussian starting points after the first (zero) start.
    pub init_scale: f64,
    /// Seed for the starting points.
    pub seed: u64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iter: 500,
            grad_tol: 1e-8,
            f_tol: 1e-12,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            n_starts: 10,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl OptOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidOptions(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_iter must be at least 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidOptions("n_starts must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.f_tol > 0.0) {
            return Err(Error::InvalidOptions("tolerances must be positive".into()));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::InvalidOptions("init_scale must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }
}

/// Why a BFGS run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientNorm,
    ObjectiveStall,
    MaxIterations,
    LineSearchFailure,
}

/// Terminal state of one BFGS run.
#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Curvature products at or below this are treated as no information and the
/// inverse-Hessian update is skipped.
const CURVATURE_SKIP_TOL: f64 = 1e-12;
/// After this many consecutive skipped updates the approximation resets to
/// the identity.
const CURVATURE_SKIP_RESET: usize = 3;
/// Bisection steps before a line search gives up.
const LINE_SEARCH_MAX_STEPS: usize = 50;

/// Minimize `objective` from `x0` by BFGS with a weak-Wolfe line search.
///
/// The objective returns `(value, gradient)`. A failed line search is not an
/// error: the best point found so far comes back with `converged = false`.
pub fn minimize_bfgs<F>(objective: F, x0: &DVector<f64>, opts: &OptOptions) -> Result<BfgsOutcome>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    opts.validate()?;
    let dim = x0.len();
    let (mut f, mut g) = objective(x0);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let mut x = x0.clone();
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut skip_streak = 0usize;

    for iter in 0..opts.max_iter {
        let grad_norm = g.norm();
        if grad_norm <= opts.grad_tol {
            return Ok(BfgsOutcome {
                x,
                value: f,
                grad_norm,
                n_iter: iter,
                converged: true,
                termination: Termination::GradientNorm,
            });
        }

        let mut direction = -(&h * &g);
        let mut slope = g.dot(&direction);
        if slope >= 0.0 {
            // numerical loss of positive definiteness: restart from steepest descent
            h = DMatrix::identity(dim, dim);
            direction = -g.clone();
            slope = -grad_norm * grad_norm;
        }

        match weak_wolfe_search(&objective, &x, f, &direction, slope, opts) {
            Some((step, f_new, g_new)) => {
                let s = step * &direction;
                let y = &g_new - &g;
                let x_new = &x + &s;

                let sy = s.dot(&y);
                if sy > CURVATURE_SKIP_TOL {
                    skip_streak = 0;
                    bfgs_update(&mut h, &s, &y, sy);
                } else {
                    skip_streak += 1;
                    if skip_streak >= CURVATURE_SKIP_RESET {
                        h = DMatrix::identity(dim, dim);
                        skip_streak = 0;
                    }
                }

                let stalled = (f - f_new).abs() <= opts.f_tol * (1.0 + f.abs());
                x = x_new;
                f = f_new;
                g = g_new;
                if stalled {
                    return Ok(BfgsOutcome {
                        grad_norm: g.norm(),
                        x,
                        value: f,
                        n_iter: iter + 1,
                        converged: true,
                        termination: Termination::ObjectiveStall,
                    });
                }
            }
            None => {
                // best point found so far is the current iterate; the line
                // search only ever accepts decreasing points
                return Ok(BfgsOutcome {
                    x,
                    value: f,
                    grad_norm,
                    n_iter: iter,
                    converged: false,
                    termination: Termination::LineSearchFailure,
                });
            }
        }
    }

    Ok(BfgsOutcome {
        grad_norm: g.norm(),
        x,
        value: f,
        n_iter: opts.max_iter,
        converged: false,
        termination: Termination::MaxIterations,
    })
}

/// Lewis-Overton bisection bracketing for the weak Wolfe conditions.
///
/// Returns `(step, value, gradient)` for an accepted step, or `None` after
/// the bisection cap. Accepted steps always satisfy sufficient decrease.
fn weak_wolfe_search<F>(
    objective: &F,
    x: &DVector<f64>,
    f0: f64,
    direction: &DVector<f64>,
    slope: f64,
    opts: &OptOptions,
) -> Option<(f64, f64, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut step = 1.0f64;
    let mut fallback: Option<(f64, f64, DVector<f64>)> = None;

    for _ in 0..LINE_SEARCH_MAX_STEPS {
        let trial = x + step * direction;
        let (f_trial, g_trial) = objective(&trial);
        let finite = f_trial.is_finite() && g_trial.iter().all(|v| v.is_finite());

        if !finite || f_trial > f0 + opts.wolfe_c1 * step * slope {
            hi = step;
        } else if g_trial.dot(direction) < opts.wolfe_c2 * slope {
            // decrease is fine but curvature says the step is too short
            if fallback.as_ref().is_none_or(|(_, fv, _)| f_trial < *fv) {
                fallback = Some((step, f_trial, g_trial.clone()));
            }
            lo = step;
        } else {
            return Some((step, f_trial, g_trial));
        }

        step = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * step };
        if step <= f64::EPSILON * (1.0 + lo) && hi.is_finite() {
            break;
        }
    }

    // no weak-Wolfe point within the cap; salvage the best sufficient-decrease
    // point if one exists so progress is never thrown away
    fallback
}

fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, sy: f64) {
    // H <- (I - rho s y') H (I - rho y s') + rho s s'
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // expanded form keeps it to rank-one updates:
    // H - rho (s (Hy)' + (Hy) s') + rho^2 (y'Hy) s s' + rho s s'
    let coeff = rho * rho * yhy + rho;
    let n = h.nrows();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + coeff * s[i] * s[j];
        }
    }
}

/// All per-start outcomes of a multi-start minimization, plus which start won.
#[derive(Debug, Clone)]
pub struct MultiStartOutcome {
    pub outcomes: Vec<BfgsOutcome>,
    pub best_index: usize,
}

impl MultiStartOutcome {
    pub fn best(&self) -> &BfgsOutcome {
        &self.outcomes[self.best_index]
    }
}

/// Run [`minimize_bfgs`] from `opts.n_starts` deterministic starting points
/// and keep the lowest terminal value (ties break toward the earlier start).
///
/// Start 0 is the origin; starts 1.. are standard-normal draws scaled by
/// `init_scale`, from per-start RNG streams derived from `opts.seed`. Starts
/// run in parallel and merge by index, so the result is reproducible.
pub fn minimize_multistart<F>(objective: F, dim: usize, opts: &OptOptions) -> Result<MultiStartOutcome>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync,
{
    opts.validate()?;
    let starts: Vec<DVector<f64>> = (0..opts.n_starts)
        .map(|k| {
            if k == 0 {
                DVector::zeros(dim)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[0x5741, k as u64]));
                DVector::from_iterator(
                    dim,
                    (0..dim).map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * opts.init_scale
                    }),
                )
            }
        })
        .collect();

    let results: Vec<Result<BfgsOutcome>> = starts
        .par_iter()
        .map(|x0| minimize_bfgs(&objective, x0, opts))
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }
    let mut best_index = 0usize;
    for (k, o) in outcomes.iter().enumerate() {
        let best = &outcomes[best_index];
        let better = o.value < best.value || (best_index != k && !best.value.is_finite());
        if better {
            best_index = k;
        }
    }
    if !outcomes[best_index].value.is_finite() {
        return Err(Error::AllStartsFailed);
    }
    Ok(MultiStartOutcome { outcomes, best_index })
}

/// Result of a maximum-likelihood (or approximate) fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    /// Mean log-likelihood at the fitted parameters.
    pub loglik: f64,
    /// `n` times the mean log-likelihood, for comparison with totals.
    pub total_loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Final gradient norm, recorded even when convergence is not declared.
    pub grad_norm: f64,
    /// Which restart produced `theta_hat`.
    pub start_index: usize,
    /// Per-start mean log-likelihood at each terminal point.
    pub all_start_logliks: Vec<f64>,
    /// Populated when the practical existence gate (both labels present,
    /// full-rank augmented design) did not pass; the fit still runs but is
    /// flagged nonconvergent.
    pub existence_warning: Option<String>,
}

/// Objective closure for the negative mean log-likelihood.
///
/// Value and gradient are accumulated in one pass over the data.
pub fn neg_mean_loglik_objective(
    data: &Dataset,
) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync + '_ {
    let n = data.n() as f64;
    move |v: &DVector<f64>| {
        let params = v.as_slice();
        let mut value = 0.0;
        let mut grad = DVector::zeros(v.len());
        for s in data.iter() {
            let mut t = params[0];
            for (xi, bi) in s.x.iter().zip(&params[1..]) {
                t += xi * bi;
            }
            value -= crate::model::log_density_at(s.y, t);
            let dt = -log_density_dt(s.y, t);
            grad[0] += dt;
            for (j, xi) in s.x.iter().enumerate() {
                grad[j + 1] += dt * xi;
            }
        }
        (value / n, grad / n)
    }
}

/// Objective closure for the total hinge loss `sum_i [1 - y_i t_i]+`.
pub fn total_hinge_objective(
    data: &Dataset,
) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync + '_ {
    move |v: &DVector<f64>| {
        let params = v.as_slice();
        let mut value = 0.0;
        let mut grad = DVector::zeros(v.len());
        for s in data.iter() {
            let ys = s.y.sign();
            let mut t = params[0];
            for (xi, bi) in s.x.iter().zip(&params[1..]) {
                t += xi * bi;
            }
            let u = 1.0 - ys * t;
            if u > 0.0 {
                value += u;
                grad[0] -= ys;
                for (j, xi) in s.x.iter().enumerate() {
                    grad[j + 1] -= ys * xi;
                }
            }
        }
        (value, grad)
    }
}

/// Objective closure for `(1/n) sum_i [1 - y_i t_i]+ + lambda * beta'beta`.
/// The ridge penalty never touches the intercept.
pub fn svm_objective(
    data: &Dataset,
    lambda: f64,
) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync + '_ {
    let n = data.n() as f64;
    let hinge = total_hinge_objective(data);
    move |v: &DVector<f64>| {
        let (mut value, mut grad) = hinge(v);
        value /= n;
        grad /= n;
        for j in 1..v.len() {
            value += lambda * v[j] * v[j];
            grad[j] += 2.0 * lambda * v[j];
        }
        (value, grad)
    }
}

/// Maximum likelihood fit of the hinge model by multi-start BFGS.
///
/// The practical existence gate (both labels present, full-rank augmented
/// design) is checked first; failing it downgrades the result to
/// nonconvergent with a warning rather than refusing to fit.
pub fn fit_mle(data: &Dataset, opts: &OptOptions) -> Result<FitResult> {
    let gate = inference::practical_existence_gate(data);
    let objective = neg_mean_loglik_objective(data);
    let multi = minimize_multistart(&objective, data.dim() + 1, opts)?;
    let best = multi.best();
    let theta_hat = Theta::from_slice(best.x.as_slice())?;
    let loglik = -best.value;
    let all_start_logliks = multi.outcomes.iter().map(|o| -o.value).collect();
    Ok(FitResult {
        total_loglik: data.n() as f64 * loglik,
        loglik,
        converged: best.converged && gate.is_none(),
        n_iter: best.n_iter,
        grad_norm: best.grad_norm,
        start_index: multi.best_index,
        all_start_logliks,
        existence_warning: gate,
        theta_hat,
    })
}

/// Fit by minimizing the total hinge loss (the concave approximate MLE).
///
/// The objective is convex, so every start should reach the same value; the
/// reported `loglik` fields still measure the model log-likelihood at the
/// chosen point.
pub fn fit_approximate(data: &Dataset, opts: &OptOptions) -> Result<FitResult> {
    let objective = total_hinge_objective(data);
    let multi = minimize_multistart(&objective, data.dim() + 1, opts)?;
    let best = multi.best();
    let theta_hat = Theta::from_slice(best.x.as_slice())?;
    let loglik = log_likelihood(data, &theta_hat)?;
    let all_start_logliks = multi
        .outcomes
        .iter()
        .map(|o| {
            Theta::from_slice(o.x.as_slice())
                .and_then(|th| log_likelihood(data, &th))
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    Ok(FitResult {
        total_loglik: data.n() as f64 * loglik,
        loglik,
        converged: best.converged,
        n_iter: best.n_iter,
        grad_norm: best.grad_norm,
        start_index: multi.best_index,
        all_start_logliks,
        existence_warning: None,
        theta_hat,
    })
}

/// Train the ridge-penalized soft-margin objective and return the parameters.
///
/// `lambda = 0` is allowed; existence then rests on the data satisfying the
/// duplicate-pair condition checked by [`crate::check_existence`].
pub fn fit_svm(data: &Dataset, lambda: f64, opts: &OptOptions) -> Result<Theta> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidOptions(format!("lambda must be nonnegative, got {lambda}")));
    }
    let objective = svm_objective(data, lambda);
    let multi = minimize_multistart(&objective, data.dim() + 1, opts)?;
    Theta::from_slice(multi.best().x.as_slice())
}
