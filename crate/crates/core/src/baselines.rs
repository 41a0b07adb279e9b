//! Comparator classifiers: logistic regression with robust standard errors,
//! and the plain sign-rule predictors shared by every linear method here.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::inference::{accumulate_moments, build_report, InferenceReport};
use crate::model::{margin, Dataset, Label, Theta};
use crate::stats::{log1p_exp, sigmoid};
use crate::{Error, Result};

/// Fitted logistic regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    pub theta_tilde: Theta,
    /// Total log-likelihood (natural log) at the fit; never positive.
    pub loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Set when the parameter norm blew past the separation guard.
    pub diverged: bool,
}

/// Tolerance on the gradient norm of the mean log-likelihood; stated per
/// sample because the total-gradient floor scales with n under rounding.
const LOGISTIC_GRAD_TOL: f64 = 1e-10;
const LOGISTIC_MAX_ITER: usize = 100;
/// Parameter norm beyond which the data are treated as perfectly separated.
const SEPARATION_NORM: f64 = 1e3;

/// Total logistic log-likelihood `sum_i log sigma(y_i t_i)` for labels in
/// {-1, +1}.
pub fn logistic_loglik(data: &Dataset, theta: &Theta) -> Result<f64> {
    let mut total = 0.0;
    for s in data.iter() {
        let t = margin(&s.x, theta)?.0;
        total -= log1p_exp(-s.y.sign() * t);
    }
    Ok(total)
}

/// Fit logistic regression by damped Newton steps.
///
/// Newton systems are solved through the SVD so that degenerate designs
/// (for example a covariate that is identically zero) still make progress in
/// the identified directions; a system with no usable directions at all is an
/// error. Perfect separation is detected by the parameter norm escaping past
/// 1e3, which flags the fit as diverged and stops early.
pub fn fit_logistic(data: &Dataset) -> Result<LogisticFit> {
    let mut has_pos = false;
    let mut has_neg = false;
    for y in data.labels() {
        match y {
            Label::Pos => has_pos = true,
            Label::Neg => has_neg = true,
        }
    }
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }

    let p = data.dim() + 1;
    let n = data.n();
    let mut theta = DVector::<f64>::zeros(p);
    let mut loglik = total_loglik_at(data, &theta);
    let mut converged = false;
    let mut diverged = false;
    let mut n_iter = 0usize;

    let grad_tol = LOGISTIC_GRAD_TOL * n as f64;
    for iter in 0..LOGISTIC_MAX_ITER {
        n_iter = iter + 1;
        let (grad, hess_neg) = grad_and_curvature(data, &theta);
        if grad.norm() <= grad_tol {
            converged = true;
            n_iter = iter;
            break;
        }
        // Newton direction: (sum w xt xt')^{-1} grad, via SVD for rank safety
        let svd = hess_neg.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::SingularNewton);
        }
        let tol = smax * f64::EPSILON * (n.max(p)) as f64;
        let step = svd.solve(&grad, tol).map_err(|_| Error::SingularNewton)?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNewton);
        }

        // damping: halve until the total log-likelihood does not decrease
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &theta + scale * &step;
            let cand_ll = total_loglik_at(data, &candidate);
            if cand_ll.is_finite() && cand_ll >= loglik {
                theta = candidate;
                loglik = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no ascent left at this resolution: call it converged
            converged = grad.norm() <= 1e-6 * n as f64;
            break;
        }
        if theta.norm() > SEPARATION_NORM {
            diverged = true;
            break;
        }
    }

    let theta_tilde = Theta::from_slice(theta.as_slice())?;
    Ok(LogisticFit {
        theta_tilde,
        loglik,
        converged: converged && !diverged,
        n_iter,
        diverged,
    })
}

fn total_loglik_at(data: &Dataset, theta: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for s in data.iter() {
        let mut t = theta[0];
        for (xi, bi) in s.x.iter().zip(theta.as_slice()[1..].iter()) {
            t += xi * bi;
        }
        total -= log1p_exp(-s.y.sign() * t);
    }
    total
}

/// Gradient of the total log-likelihood and the (positive semidefinite)
/// negated Hessian `sum_i w_i xt_i xt_i'` with `w_i = sigma(t_i) sigma(-t_i)`.
fn grad_and_curvature(data: &Dataset, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let mut grad = DVector::<f64>::zeros(p);
    let mut curv = DMatrix::<f64>::zeros(p, p);
    let mut xt = vec![0.0; p];
    xt[0] = 1.0;
    for s in data.iter() {
        let mut t = theta[0];
        for (xi, bi) in s.x.iter().zip(theta.as_slice()[1..].iter()) {
            t += xi * bi;
        }
        let ys = s.y.sign();
        let resid = ys * sigmoid(-ys * t);
        let w = sigmoid(t) * sigmoid(-t);
        xt[1..].copy_from_slice(&s.x);
        for i in 0..p {
            grad[i] += resid * xt[i];
            let wxi = w * xt[i];
            for j in 0..p {
                curv[(i, j)] += wxi * xt[j];
            }
        }
    }
    (grad, curv)
}

/// Sandwich covariance for a logistic fit, reusing the shared moment
/// machinery with the logistic log-density derivatives.
pub fn logistic_sandwich(data: &Dataset, fit: &LogisticFit) -> Result<InferenceReport> {
    let derivatives = |y: Label, t: f64| {
        let ys = y.sign();
        let dt = ys * sigmoid(-ys * t);
        let dtt = -sigmoid(t) * sigmoid(-t);
        (dt, dtt, false)
    };
    let (a_hat, b_hat, kinks) = accumulate_moments(data, &fit.theta_tilde, derivatives)?;
    build_report(data, &fit.theta_tilde, a_hat, b_hat, kinks)
}

/// Sign-rule prediction from a logistic fit (ties go to +1).
pub fn predict_logistic(x: &[f64], fit: &LogisticFit) -> Result<Label> {
    predict_svm(x, &fit.theta_tilde)
}

/// Sign-rule prediction from any linear parameter vector (ties go to +1).
pub fn predict_svm(x: &[f64], theta: &Theta) -> Result<Label> {
    let t = margin(x, theta)?.0;
    Ok(if t >= 0.0 { Label::Pos } else { Label::Neg })
}

/// Posterior probability of the +1 label under the logistic model.
pub fn logistic_prob_pos(x: &[f64], fit: &LogisticFit) -> Result<f64> {
    let t = margin(x, &fit.theta_tilde)?.0;
    Ok(sigmoid(t))
}
