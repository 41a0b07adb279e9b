//! Misspecification-robust covariance estimation, Wald tests, and
//! MLE-existence diagnostics.
//!
//! The asymptotic covariance of the MLE is the sandwich `A^{-1} B A^{-1}`
//! with `A` the mean Hessian of the log-density and `B` the mean outer
//! product of score vectors, both evaluated at the fitted parameters. The
//! extra `1/n` inside [`sandwich_cov`] converts the asymptotic covariance of
//! `sqrt(n) (theta_hat - theta_0)` into standard errors for `theta_hat`
//! itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{log_density_dt, log_density_dtt, margin, near_kink, Dataset, Label, Theta};
use crate::stats::normal_cdf;
use crate::{Error, Result};

/// Condition numbers above this refuse inversion rather than silently
/// corrupting standard errors.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Robust inference summary at a fitted parameter vector.
#[derive(Debug, Clone)]
pub struct InferenceReport {
    /// Mean Hessian of the log-density, (d+1) x (d+1).
    pub a_hat: DMatrix<f64>,
    /// Mean outer product of scores; symmetric PSD by construction.
    pub b_hat: DMatrix<f64>,
    /// Sandwich covariance `A^{-1} B A^{-1} / n`.
    pub cov: DMatrix<f64>,
    /// Standard errors: square roots of the covariance diagonal.
    pub se: Vec<f64>,
    /// Wald statistics `theta_j / se_j`.
    pub z: Vec<f64>,
    /// Two-sided normal p-values.
    pub p: Vec<f64>,
    /// Samples whose margin fell within 1e-8 of a kink; curvature there uses
    /// the one-sided convention.
    pub kink_count: usize,
    /// Raised when more than 1% of samples sit at kinks: the smoothness
    /// assumptions behind the sandwich are strained.
    pub kink_warning: bool,
}

impl InferenceReport {
    /// Row-major copies of `A_hat`, `B_hat`, and `cov`, for serialization.
    pub fn matrices_as_rows(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        (rows(&self.a_hat), rows(&self.b_hat), rows(&self.cov))
    }
}

/// Existence diagnostics for the MLE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub both_labels_present: bool,
    /// Numerical rank of the n x (d+1) augmented design.
    pub augmented_rank: usize,
    /// True when the rank equals d+1, i.e. the only vector orthogonal to
    /// every augmented covariate is zero.
    pub full_rank: bool,
    /// True when some +1 sample and some -1 sample share their covariate
    /// vector (the proportionality constant is forced to one by the leading
    /// intercept coordinate), which guarantees a coercive negative
    /// log-likelihood with no probabilistic assumptions.
    pub remark2_pair_found: bool,
    pub details: String,
}

/// Accumulate the two moment matrices in one pass.
///
/// `derivatives` maps `(label, margin)` to the scalar first and second
/// derivatives of the chosen log-density along the margin, plus a
/// kink-proximity flag. Both matrices come back divided by `n`; `B` is exactly
/// symmetric because entries `(i, j)` and `(j, i)` are the same product.
pub(crate) fn accumulate_moments(
    data: &Dataset,
    theta: &Theta,
    derivatives: impl Fn(Label, f64) -> (f64, f64, bool),
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    let p = data.dim() + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DMatrix::<f64>::zeros(p, p);
    let mut kinks = 0usize;
    let mut xt = vec![0.0; p];
    xt[0] = 1.0;
    for s in data.iter() {
        let t = margin(&s.x, theta)?.0;
        let (dt, dtt, kink) = derivatives(s.y, t);
        if kink {
            kinks += 1;
        }
        xt[1..].copy_from_slice(&s.x);
        for i in 0..p {
            let gi = dt * xt[i];
            let hi = dtt * xt[i];
            for j in 0..p {
                a[(i, j)] += hi * xt[j];
                b[(i, j)] += gi * (dt * xt[j]);
            }
        }
    }
    let n = data.n() as f64;
    a /= n;
    b /= n;
    Ok((a, b, kinks))
}

fn model_derivatives(y: Label, t: f64) -> (f64, f64, bool) {
    (log_density_dt(y, t), log_density_dtt(t), near_kink(t))
}

/// Mean Hessian of the model log-density over the sample, with the number of
/// kink-proximate margins encountered.
pub fn estimate_a(data: &Dataset, theta: &Theta) -> Result<(DMatrix<f64>, usize)> {
    let (a, _, kinks) = accumulate_moments(data, theta, model_derivatives)?;
    Ok((a, kinks))
}

/// Mean outer product of model score vectors over the sample.
pub fn estimate_b(data: &Dataset, theta: &Theta) -> Result<DMatrix<f64>> {
    let (_, b, _) = accumulate_moments(data, theta, model_derivatives)?;
    Ok(b)
}

/// Sandwich covariance `A^{-1} B A^{-1} / n`.
///
/// `A` is inverted through its SVD with an explicit condition-number gate:
/// a singular or near-singular `A` is an error, never a silent pseudo-inverse.
pub fn sandwich_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p || b.nrows() != p || b.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: b.nrows() });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond >= CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    let a_inv = svd.pseudo_inverse(0.0).map_err(|_| Error::IllConditioned { cond })?;
    let mut cov = (&a_inv * b * &a_inv) / n as f64;
    // kill rounding asymmetry
    let covt = cov.transpose();
    cov = (cov + covt) * 0.5;
    Ok(cov)
}

/// Wald statistics and two-sided p-values for `H0: theta_j = 0`.
pub fn wald_test(theta_hat: &[f64], se: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta_hat.len() != se.len() {
        return Err(Error::DimensionMismatch { expected: theta_hat.len(), got: se.len() });
    }
    let mut z = Vec::with_capacity(se.len());
    let mut p = Vec::with_capacity(se.len());
    for (j, (&est, &s)) in theta_hat.iter().zip(se).enumerate() {
        if !(s > 0.0) {
            return Err(Error::ZeroStandardError(j));
        }
        let zj = est / s;
        z.push(zj);
        p.push(2.0 * (1.0 - normal_cdf(zj.abs())));
    }
    Ok((z, p))
}

/// Full robust-inference pipeline at a fitted parameter vector.
pub fn robust_inference(data: &Dataset, theta: &Theta) -> Result<InferenceReport> {
    let (a_hat, b_hat, kink_count) = accumulate_moments(data, theta, model_derivatives)?;
    build_report(data, theta, a_hat, b_hat, kink_count)
}

pub(crate) fn build_report(
    data: &Dataset,
    theta: &Theta,
    a_hat: DMatrix<f64>,
    b_hat: DMatrix<f64>,
    kink_count: usize,
) -> Result<InferenceReport> {
    let cov = sandwich_cov(&a_hat, &b_hat, data.n())?;
    let se: Vec<f64> = (0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let flat = theta.to_vec();
    let (z, p) = wald_test(&flat, &se)?;
    let kink_warning = kink_count as f64 / data.n() as f64 > 0.01;
    Ok(InferenceReport { a_hat, b_hat, cov, se, z, p, kink_count, kink_warning })
}

/// The cheap subset of [`check_existence`] used as a pre-fit gate: both
/// labels present and full-rank augmented design. Returns a warning message
/// when the gate fails.
pub(crate) fn practical_existence_gate(data: &Dataset) -> Option<String> {
    let mut has_pos = false;
    let mut has_neg = false;
    for y in data.labels() {
        match y {
            Label::Pos => has_pos = true,
            Label::Neg => has_neg = true,
        }
    }
    if !(has_pos && has_neg) {
        return Some("all responses share one label; the likelihood has no finite maximizer".into());
    }
    let (rank, p) = augmented_rank(data);
    if rank < p {
        return Some(format!(
            "augmented design is rank-deficient (rank {rank} < {p}); the MLE is not identified"
        ));
    }
    None
}

/// Numerical rank of the n x (d+1) augmented design by singular-value
/// thresholding at `max(n, d+1) * eps * s_max`.
fn augmented_rank(data: &Dataset) -> (usize, usize) {
    let n = data.n();
    let p = data.dim() + 1;
    let mut design = DMatrix::<f64>::zeros(n, p);
    for (i, s) in data.iter().enumerate() {
        design[(i, 0)] = 1.0;
        for (j, &x) in s.x.iter().enumerate() {
            design[(i, j + 1)] = x;
        }
    }
    let sv = design.singular_values();
    let smax = sv.max();
    let threshold = (n.max(p)) as f64 * f64::EPSILON * smax;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    (rank, p)
}

/// Existence diagnostics: label balance, augmented-design rank, and the
/// duplicate-pair sufficient condition for coerciveness.
///
/// The proportionality scan looks for a +1 sample and a -1 sample whose
/// augmented covariates satisfy `xt_j = C xt_i` with `C > 0`. Both augmented
/// vectors lead with 1, so `C` is forced to one and the scan reduces to
/// finding duplicate covariate rows with opposite labels (within relative
/// tolerance 1e-9). The result is invariant to sample order and to jointly
/// rescaling all covariates by a positive constant.
pub fn check_existence(data: &Dataset) -> ExistenceReport {
    let mut has_pos = false;
    let mut has_neg = false;
    for y in data.labels() {
        match y {
            Label::Pos => has_pos = true,
            Label::Neg => has_neg = true,
        }
    }
    let both_labels_present = has_pos && has_neg;

    let (augmented_rank, p) = augmented_rank(data);
    let full_rank = augmented_rank == p;

    let remark2_pair_found = both_labels_present && duplicate_opposite_pair(data);

    let mut details = String::new();
    if !both_labels_present {
        details.push_str("single label class; ");
    }
    if !full_rank {
        details.push_str(&format!("rank-deficient design ({augmented_rank} < {p}); "));
    }
    if remark2_pair_found {
        details.push_str("found opposite-label duplicate covariates (coercive objective); ");
    }
    if details.is_empty() {
        details.push_str("practical existence gate passed");
    }

    ExistenceReport {
        both_labels_present,
        augmented_rank,
        full_rank,
        remark2_pair_found,
        details: details.trim_end_matches([' ', ';']).to_string(),
    }
}

const PAIR_REL_TOL: f64 = 1e-9;

fn duplicate_opposite_pair(data: &Dataset) -> bool {
    let pos: Vec<&[f64]> = data
        .iter()
        .filter(|s| s.y == Label::Pos)
        .map(|s| s.x.as_slice())
        .collect();
    let neg: Vec<&[f64]> = data
        .iter()
        .filter(|s| s.y == Label::Neg)
        .map(|s| s.x.as_slice())
        .collect();
    for a in &pos {
        for b in &neg {
            if a.iter().zip(b.iter()).all(|(&u, &v)| {
                let scale = u.abs().max(v.abs());
                (u - v).abs() <= PAIR_REL_TOL * scale
            }) {
                return true;
            }
        }
    }
    false
}
