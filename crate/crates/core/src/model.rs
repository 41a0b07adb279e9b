//! The hinge-loss probability model and its exact derivatives.
//!
//! Everything is driven by the scalar margin `t = alpha + x'beta`. Writing
//! `[u]+ = max(u, 0)` for the hinge, the model density is
//!
//! ```text
//! f(y | t) = exp(-[1 - y*t]+) / Z(t),   Z(t) = exp(-[1 - t]+) + exp(-[1 + t]+)
//! ```
//!
//! The log-density is piecewise analytic with kinks at `t = -1` and `t = +1`
//! where the two hinge arguments cross zero. Derivatives use the convention
//! that a hinge contributes only where its argument is strictly positive, so
//! at a kink the flat-branch (one-sided) derivative is returned.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary response coded as -1 / +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// The numeric code: +1.0 or -1.0.
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    /// Parse a numeric code that must be exactly -1 or +1.
    pub fn from_f64(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Label::Pos)
        } else if v == -1.0 {
            Ok(Label::Neg)
        } else {
            Err(Error::InvalidLabel(v))
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

/// Model parameters: intercept `alpha` and coefficient vector `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    /// Build a parameter vector, rejecting non-finite entries and `d = 0`.
    pub fn new(alpha: f64, beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(Theta { alpha, beta })
    }

    /// All-zero parameters of covariate dimension `d`.
    pub fn zeros(d: usize) -> Self {
        Theta { alpha: 0.0, beta: vec![0.0; d] }
    }

    /// All-one parameters of covariate dimension `d`.
    pub fn ones(d: usize) -> Self {
        Theta { alpha: 1.0, beta: vec![1.0; d] }
    }

    /// Covariate dimension `d`.
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Flatten to `(alpha, beta...)`, the layout used by the optimizer.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + 1);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    /// Rebuild from the `(alpha, beta...)` layout.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: v.len() });
        }
        Theta::new(v[0], v[1..].to_vec())
    }

    /// Squared Euclidean distance to another parameter vector.
    pub fn squared_distance(&self, other: &Theta) -> f64 {
        let mut s = (self.alpha - other.alpha).powi(2);
        for (a, b) in self.beta.iter().zip(&other.beta) {
            s += (a - b) * (a - b);
        }
        s
    }
}

/// One observation: covariates `x` and a binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: Label,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: Label) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        Ok(LabeledSample { x, y })
    }
}

/// An ordered sample of observations with a common covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    d: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let d = first.x.len();
        for s in &samples {
            if s.x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.x.len() });
            }
        }
        Ok(Dataset { samples, d })
    }

    /// Convenience constructor from raw rows and numeric labels.
    pub fn from_rows(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        let samples = xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| LabeledSample::new(x, Label::from_f64(y)?))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSample> {
        self.samples.iter()
    }

    /// A new dataset holding the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Dataset::new(samples)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.samples.iter().map(|s| s.y)
    }
}

/// The scalar linear score `t = alpha + x'beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin(pub f64);

/// Hinge function `[u]+ = max(u, 0)`.
pub fn hinge(u: f64) -> f64 {
    u.max(0.0)
}

/// Compute the margin `alpha + x'beta`.
pub fn margin(x: &[f64], theta: &Theta) -> Result<Margin> {
    if x.len() != theta.dim() {
        return Err(Error::DimensionMismatch { expected: theta.dim(), got: x.len() });
    }
    let mut t = theta.alpha;
    for (xi, bi) in x.iter().zip(&theta.beta) {
        t += xi * bi;
    }
    Ok(Margin(t))
}

/// log Z(t) = log(exp(-[1-t]+) + exp(-[1+t]+)), evaluated by log-sum-exp with
/// max subtraction so large |t| cannot overflow.
pub fn log_partition(t: f64) -> f64 {
    let a = -hinge(1.0 - t);
    let b = -hinge(1.0 + t);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// log f(y | t) for a precomputed margin.
pub fn log_density_at(y: Label, t: f64) -> f64 {
    -hinge(1.0 - y.sign() * t) - log_partition(t)
}

/// log f(y | x; theta).
pub fn log_density(y: Label, x: &[f64], theta: &Theta) -> Result<f64> {
    Ok(log_density_at(y, margin(x, theta)?.0))
}

/// f(y | t), always in (0, 1) for finite t.
pub fn density_at(y: Label, t: f64) -> f64 {
    log_density_at(y, t).exp()
}

/// f(y | x; theta).
pub fn density(y: Label, x: &[f64], theta: &Theta) -> Result<f64> {
    Ok(density_at(y, margin(x, theta)?.0))
}

/// Mean log-likelihood `n^{-1} sum_i log f(y_i | x_i; theta)`.
pub fn log_likelihood(data: &Dataset, theta: &Theta) -> Result<f64> {
    if theta.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: theta.dim() });
    }
    let mut total = 0.0;
    for s in data.iter() {
        let t = margin(&s.x, theta)?.0;
        total += log_density_at(s.y, t);
    }
    Ok(total / data.n() as f64)
}

/// d/dt log f(y | t).
///
/// A hinge contributes only where its argument is strictly positive; at the
/// kinks `t = -/+1` (and at `y*t = 1`) this returns the one-sided derivative
/// of the flat branch.
pub fn log_density_dt(y: Label, t: f64) -> f64 {
    let ys = y.sign();
    let loss = if ys * t < 1.0 { ys } else { 0.0 };
    let mut zprime_over_z = 0.0;
    if t < 1.0 {
        zprime_over_z += density_at(Label::Pos, t);
    }
    if t > -1.0 {
        zprime_over_z -= density_at(Label::Neg, t);
    }
    loss - zprime_over_z
}

/// d^2/dt^2 log f(y | t); independent of `y` because the loss hinge is
/// piecewise linear. Equals `-c * f(+1|t) * f(-1|t)` with `c = 4` strictly
/// inside (-1, 1) and `c = 1` elsewhere (kink convention as in
/// [`log_density_dt`]).
pub fn log_density_dtt(t: f64) -> f64 {
    let c = if t > -1.0 && t < 1.0 { 4.0 } else { 1.0 };
    -c * density_at(Label::Pos, t) * density_at(Label::Neg, t)
}

/// Margin distance below which a sample is flagged as kink-proximate.
pub const KINK_TOLERANCE: f64 = 1e-8;

/// True when `t` lies within [`KINK_TOLERANCE`] of either kink.
pub fn near_kink(t: f64) -> bool {
    (t - 1.0).abs() < KINK_TOLERANCE || (t + 1.0).abs() < KINK_TOLERANCE
}

/// Gradient of log f(y | x; theta) with respect to `(alpha, beta)`.
pub fn grad_log_density(y: Label, x: &[f64], theta: &Theta) -> Result<Vec<f64>> {
    let t = margin(x, theta)?.0;
    let dt = log_density_dt(y, t);
    let mut g = Vec::with_capacity(x.len() + 1);
    g.push(dt);
    g.extend(x.iter().map(|xi| dt * xi));
    Ok(g)
}

/// Hessian of log f(y | x; theta): the rank-one matrix `l''(t) * xt xt'` with
/// `xt = (1, x)`, plus a flag marking kink-proximate margins so downstream
/// curvature consumers know the one-sided convention was applied.
pub struct HessianTerm {
    /// Row-major (d+1) x (d+1) matrix.
    pub matrix: Vec<Vec<f64>>,
    pub kink_proximate: bool,
}

pub fn hessian_log_density(y: Label, x: &[f64], theta: &Theta) -> Result<HessianTerm> {
    let t = margin(x, theta)?.0;
    let _ = y; // curvature does not depend on the label
    let dtt = log_density_dtt(t);
    let p = x.len() + 1;
    let mut xt = Vec::with_capacity(p);
    xt.push(1.0);
    xt.extend_from_slice(x);
    let mut m = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            m[i][j] = dtt * xt[i] * xt[j];
        }
    }
    Ok(HessianTerm { matrix: m, kink_proximate: near_kink(t) })
}

/// MAP label prediction: +1 when f(+1 | x) >= 1/2, which for this model is
/// exactly the sign rule with ties resolved to +1.
pub fn predict_map(x: &[f64], theta: &Theta) -> Result<Label> {
    let t = margin(x, theta)?.0;
    Ok(if t >= 0.0 { Label::Pos } else { Label::Neg })
}

/// The coercivity decomposition of the expected negative log-density at a
/// fixed margin: `h = h1 + h2` with
///
/// ```text
/// h1(t) = p [1-t]+ + (1-p) [1+t]+        (coercive)
/// h2(t) = log(exp(-[1-t]+) + exp(-[1+t]+))   (bounded, |h2| <= 1 - log 2)
/// ```
///
/// Used by theory-validation tests and for exporting plot data; `p` is the
/// generating probability of the +1 label at this margin.
pub fn expected_neg_log_density(p: f64, t: Margin) -> Result<(f64, f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let h1 = p * hinge(1.0 - t.0) + (1.0 - p) * hinge(1.0 + t.0);
    let h2 = log_partition(t.0);
    Ok((h1 + h2, h1, h2))
}

/// Default cap on the expanded polynomial feature dimension.
pub const POLY_DIM_CAP: usize = 10_000;

/// Explicit feature map for the polynomial kernel `(x'x' + c)^u`.
///
/// Enumerates every monomial multi-index of total degree 1..=u, weighting each
/// by the square root of its multinomial coefficient times `c` raised to the
/// slack degree. The degree-zero (constant) monomial is dropped: the model
/// carries a free intercept, and keeping a constant column would make the
/// augmented design rank-deficient. Consequently
///
/// ```text
/// <phi(x), phi(x')> + c^u = (x'x' + c)^u     exactly.
/// ```
#[derive(Debug, Clone)]
pub struct PolyMap {
    d: usize,
    c: f64,
    u: u32,
    /// Per output feature: exponent vector (length d) and sqrt weight.
    terms: Vec<(Vec<u32>, f64)>,
}

impl PolyMap {
    pub fn new(d: usize, c: f64, u: u32) -> Result<Self> {
        Self::with_cap(d, c, u, POLY_DIM_CAP)
    }

    pub fn with_cap(d: usize, c: f64, u: u32, cap: usize) -> Result<Self> {
        if u == 0 {
            return Err(Error::ZeroPolyDegree);
        }
        if d == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("poly constant"));
        }
        let nominal = binomial(d as u128 + u as u128, u as u128)
            .and_then(|b| b.checked_sub(1))
            .ok_or(Error::PolyDimensionCap { dim: usize::MAX, cap })?;
        if nominal > cap as u128 {
            return Err(Error::PolyDimensionCap { dim: nominal.min(usize::MAX as u128) as usize, cap });
        }

        let mut terms = Vec::new();
        let mut exponents = vec![0u32; d];
        enumerate_monomials(d, u, 0, u, &mut exponents, &mut |expo, total| {
            if total == 0 {
                return; // constant monomial: absorbed by the intercept
            }
            let slack = u - total;
            let coeff = multinomial(u, expo, slack) * c.powi(slack as i32);
            if coeff == 0.0 {
                return; // c = 0 kills every monomial with slack degree
            }
            terms.push((expo.to_vec(), coeff.sqrt()));
        });
        Ok(PolyMap { d, c, u, terms })
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.terms.len()
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn degree(&self) -> u32 {
        self.u
    }

    /// Map one covariate vector into feature space.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|(expo, w)| {
                let mut v = *w;
                for (xi, &e) in x.iter().zip(expo) {
                    v *= xi.powi(e as i32);
                }
                v
            })
            .collect())
    }

    /// Human-readable monomial names aligned with [`PolyMap::apply`] output.
    pub fn term_names(&self, input_names: &[String]) -> Vec<String> {
        self.terms
            .iter()
            .map(|(expo, _)| {
                let parts: Vec<String> = expo
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(j, &e)| {
                        let base = input_names
                            .get(j)
                            .cloned()
                            .unwrap_or_else(|| format!("x{}", j + 1));
                        if e == 1 {
                            base
                        } else {
                            format!("{}^{}", base, e)
                        }
                    })
                    .collect();
                parts.join("*")
            })
            .collect()
    }
}

/// One-shot polynomial feature expansion of a single covariate vector.
pub fn poly_features(x: &[f64], c: f64, u: u32) -> Result<Vec<f64>> {
    PolyMap::new(x.len(), c, u)?.apply(x)
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)?;
        acc /= i + 1;
    }
    Some(acc)
}

/// u! / (slack! * prod_j expo_j!), exact in integer arithmetic for desk-scale
/// degrees before converting to f64.
fn multinomial(u: u32, expo: &[u32], slack: u32) -> f64 {
    let mut acc: u128 = 1;
    let mut remaining = u;
    let mut parts: Vec<u32> = expo.iter().copied().filter(|&e| e > 0).collect();
    parts.push(slack);
    for part in parts {
        // multiply C(remaining, part)
        acc *= binomial(remaining as u128, part as u128).expect("multinomial overflow");
        remaining -= part;
    }
    acc as f64
}

fn enumerate_monomials(
    d: usize,
    u: u32,
    pos: usize,
    budget: u32,
    exponents: &mut Vec<u32>,
    emit: &mut impl FnMut(&[u32], u32),
) {
    if pos == d {
        emit(exponents, u - budget);
        return;
    }
    // highest exponent first so earlier variables lead the output order
    for e in (0..=budget).rev() {
        exponents[pos] = e;
        enumerate_monomials(d, u, pos + 1, budget - e, exponents, emit);
    }
    exponents[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn margin_examples() {
        let theta = Theta::new(1.0, vec![2.0, -3.0]).unwrap();
        assert_abs_diff_eq!(margin(&[0.0, 0.0], &theta).unwrap().0, 1.0);
        let theta = Theta::new(1.0, vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(margin(&[1.0, 1.0], &theta).unwrap().0, 3.0);
        let theta = Theta::new(-1.0, vec![0.5]).unwrap();
        assert_abs_diff_eq!(margin(&[2.0], &theta).unwrap().0, 0.0);
        assert!(matches!(
            margin(&[1.0], &Theta::new(0.0, vec![1.0, 1.0]).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(-3.0), 0.0);
        assert_eq!(hinge(0.0), 0.0);
        assert_eq!(hinge(2.5), 2.5);
    }

    #[test]
    fn log_density_reference_values() {
        // zero margin: both labels get probability 1/2
        assert_abs_diff_eq!(log_density_at(Label::Pos, 0.0), -LN2, epsilon = 1e-15);
        assert_abs_diff_eq!(log_density_at(Label::Neg, 0.0), -LN2, epsilon = 1e-15);
        // |t| <= 1 region: log f(1|t) = t - log(2 cosh t)
        let expect = 1.0 - (2.0 * 1.0f64.cosh()).ln();
        assert_abs_diff_eq!(log_density_at(Label::Pos, 1.0), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, -0.126_928_011_042_972_6, epsilon = 1e-12);
        // t >= 1 region: log f(1|t) = -log(1 + exp(-(1+t)))
        assert_abs_diff_eq!(
            log_density_at(Label::Pos, 3.0),
            -(1.0 + (-4.0f64).exp()).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(log_density_at(Label::Pos, 3.0), -0.018_149_927_917_809, epsilon = 1e-12);
    }

    #[test]
    fn region_formulas_agree_at_boundary() {
        let middle = |t: f64| t - (2.0 * t.cosh()).ln();
        let right = |t: f64| -(1.0 + (-(1.0 + t)).exp()).ln();
        assert_abs_diff_eq!(middle(1.0), right(1.0), epsilon = 1e-12);
        for &t in &[-0.9, -0.3, 0.0, 0.4, 1.0] {
            assert_abs_diff_eq!(log_density_at(Label::Pos, t), middle(t), epsilon = 1e-12);
        }
        for &t in &[1.0, 1.5, 4.0, 30.0] {
            assert_abs_diff_eq!(log_density_at(Label::Pos, t), right(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn density_reference_values() {
        assert_abs_diff_eq!(density_at(Label::Pos, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(density_at(Label::Neg, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(density_at(Label::Pos, 1.0), 0.880_797_077_977_882_3, epsilon = 1e-12);
        // monotone approach to 1
        let mut last = 0.0;
        for &t in &[1.0, 2.0, 5.0, 20.0, 100.0] {
            let p = density_at(Label::Pos, t);
            assert!(p > last && p <= 1.0);
            last = p;
        }
        assert!(density_at(Label::Pos, 700.0) > 1.0 - 1e-12);
    }

    #[test]
    fn densities_normalize_even_for_extreme_margins() {
        for &t in &[-1e8, -500.0, -1.0, -1e-12, 0.0, 1.0, 37.5, 1e8] {
            let total = density_at(Label::Pos, t) + density_at(Label::Neg, t);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_likelihood_is_mean_of_log_densities() {
        let data = Dataset::from_rows(vec![vec![0.5], vec![-1.2], vec![2.0]], vec![1.0, -1.0, 1.0])
            .unwrap();
        let theta = Theta::new(0.3, vec![-0.7]).unwrap();
        let naive: f64 = data
            .iter()
            .map(|s| log_density(s.y, &s.x, &theta).unwrap())
            .sum::<f64>()
            / data.n() as f64;
        assert_abs_diff_eq!(log_likelihood(&data, &theta).unwrap(), naive, epsilon = 1e-15);
        // theta = 0 forces every margin to zero
        let zero = Theta::zeros(1);
        assert_abs_diff_eq!(log_likelihood(&data, &zero).unwrap(), -LN2, epsilon = 1e-15);
    }

    #[test]
    fn scalar_derivative_reference_values() {
        // middle region: dl/dt = 1 - tanh(t) for y = +1
        assert_abs_diff_eq!(log_density_dt(Label::Pos, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            log_density_dt(Label::Pos, 0.4),
            1.0 - 0.4f64.tanh(),
            epsilon = 1e-12
        );
        // outer region
        let e4 = (-4.0f64).exp();
        assert_abs_diff_eq!(log_density_dt(Label::Pos, 3.0), e4 / (1.0 + e4), epsilon = 1e-12);
        assert_abs_diff_eq!(log_density_dt(Label::Pos, 3.0), 0.017_986_209_962_091, epsilon = 1e-12);
        // label symmetry: dl/dt for (y, t) = -dl/dt for (-y, -t)
        for &t in &[-2.3, -0.5, 0.0, 0.7, 1.9] {
            assert_abs_diff_eq!(
                log_density_dt(Label::Pos, t),
                -log_density_dt(Label::Neg, -t),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn kink_convention_uses_flat_branch() {
        // at t = 1 the [1-t]+ hinge is inactive: derivative from the t >= 1 region
        let e2 = (-2.0f64).exp();
        assert_abs_diff_eq!(log_density_dt(Label::Pos, 1.0), e2 / (1.0 + e2), epsilon = 1e-12);
        // at t = -1 the [1+t]+ hinge is inactive: derivative from the t <= -1 region
        assert_abs_diff_eq!(
            log_density_dt(Label::Pos, -1.0),
            1.0 - e2 / (1.0 + e2),
            epsilon = 1e-12
        );
        // second derivative treats the kink as the outer (c = 1) region
        let p = density_at(Label::Pos, 1.0);
        assert_abs_diff_eq!(log_density_dtt(1.0), -p * (1.0 - p), epsilon = 1e-12);
        assert_abs_diff_eq!(log_density_dtt(0.0), -1.0, epsilon = 1e-15); // -sech^2(0)
    }

    #[test]
    fn gradient_is_scaled_augmented_covariate() {
        let theta = Theta::new(0.0, vec![0.0, 0.0]).unwrap();
        let g = grad_log_density(Label::Pos, &[2.0, -1.0], &theta).unwrap();
        // t = 0, dl/dt = 1, so the gradient is (1, x)
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_reference_and_kink_flag() {
        let theta = Theta::zeros(1);
        let h = hessian_log_density(Label::Pos, &[0.0], &theta).unwrap();
        assert_abs_diff_eq!(h.matrix[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.matrix[0][1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.matrix[1][1], 0.0, epsilon = 1e-15);
        assert!(!h.kink_proximate);

        let theta = Theta::new(1.0 + 5e-9, vec![0.0]).unwrap();
        let h = hessian_log_density(Label::Neg, &[0.0], &theta).unwrap();
        assert!(h.kink_proximate);
    }

    #[test]
    fn map_prediction_is_sign_rule() {
        let theta = Theta::new(0.0, vec![1.0]).unwrap();
        assert_eq!(predict_map(&[0.0], &theta).unwrap(), Label::Pos); // tie -> +1
        assert_eq!(predict_map(&[2.0], &theta).unwrap(), Label::Pos);
        assert_eq!(predict_map(&[-2.0], &theta).unwrap(), Label::Neg);
    }

    #[test]
    fn h_decomposition_reference() {
        let (h, h1, h2) = expected_neg_log_density(0.5, Margin(0.0)).unwrap();
        assert_abs_diff_eq!(h1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h2, LN2 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h, LN2, epsilon = 1e-15);
        // coercive: h1 dominates for large |t|
        let (h_big, _, _) = expected_neg_log_density(0.8, Margin(1e6)).unwrap();
        assert!(h_big > 1e5);
        assert!(matches!(
            expected_neg_log_density(0.0, Margin(0.0)),
            Err(Error::InvalidProbability(_))
        ));
        assert!(matches!(
            expected_neg_log_density(1.0, Margin(0.0)),
            Err(Error::InvalidProbability(_))
        ));
    }

    #[test]
    fn h2_bound_on_dense_grid() {
        let bound = 1.0 - LN2;
        let mut t = -100.0;
        while t <= 100.0 {
            let (_, _, h2) = expected_neg_log_density(0.3, Margin(t)).unwrap();
            assert!(h2.abs() <= bound + 1e-12, "h2 bound violated at t = {t}");
            t += 0.01;
        }
    }

    #[test]
    fn poly_map_degree_two_without_constant() {
        // d = 1, c = 0, u = 2: the only surviving monomial is x^2
        let phi = poly_features(&[3.0], 0.0, 2).unwrap();
        assert_eq!(phi, vec![9.0]);

        // d = 2, c = 1, u = 1: identity map, constant absorbed by the intercept
        let phi = poly_features(&[4.0, -2.5], 1.0, 1).unwrap();
        assert_eq!(phi, vec![4.0, -2.5]);
    }

    #[test]
    fn poly_map_reproduces_kernel_value() {
        let cases = [(1usize, 0.0, 2u32), (2, 1.0, 2), (3, 0.5, 3), (2, 2.0, 4)];
        let xs = [
            vec![0.7, -1.3, 0.2],
            vec![1.1, 0.4, -0.9],
            vec![-0.3, 2.0, 0.5],
        ];
        for &(d, c, u) in &cases {
            let map = PolyMap::new(d, c, u).unwrap();
            for a in &xs {
                for b in &xs {
                    let (a, b) = (&a[..d], &b[..d]);
                    let phi_a = map.apply(a).unwrap();
                    let phi_b = map.apply(b).unwrap();
                    let dot: f64 = phi_a.iter().zip(&phi_b).map(|(p, q)| p * q).sum();
                    let raw: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                    let kernel = (raw + c).powi(u as i32);
                    let got = dot + c.powi(u as i32);
                    assert_abs_diff_eq!(got, kernel, epsilon = 1e-12 * kernel.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn poly_map_dimension_accounting() {
        // full dimension is C(d+u, u) - 1 when c != 0
        let map = PolyMap::new(3, 1.0, 2).unwrap();
        assert_eq!(map.output_dim(), 9); // C(5,2) - 1
        let names = map.term_names(&["a".into(), "b".into(), "c".into()]);
        assert_eq!(names.len(), 9);
        assert!(names.contains(&"a^2".to_string()));
        assert!(names.contains(&"a*b".to_string()));

        assert!(matches!(poly_features(&[1.0], 1.0, 0), Err(Error::ZeroPolyDegree)));
        assert!(matches!(
            PolyMap::with_cap(10, 1.0, 5, 100),
            Err(Error::PolyDimensionCap { .. })
        ));
    }

    #[test]
    fn dataset_invariants() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
        let bad = Dataset::from_rows(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, -1.0]);
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Label::from_f64(0.5), Err(Error::InvalidLabel(_))));
        assert!(matches!(
            LabeledSample::new(vec![f64::NAN], Label::Pos),
            Err(Error::NonFinite(_))
        ));
    }
}
