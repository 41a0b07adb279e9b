//! Fit recovery on covariates with realistic, badly mismatched scales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svmreg::model::{density_at, margin, Dataset, Label, LabeledSample, Theta};
use svmreg::{fit_mle, robust_inference, OptOptions};

/// Covariates spanning three orders of magnitude (a concentration in units,
/// a distance in hundreds, a small count, a binary flag) with coefficients
/// scaled to match. The fit must land near the truth and its Wald intervals
/// must be sane.
#[test]
fn mle_recovers_truth_on_mixed_scale_covariates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8_001);
    let truth = Theta::new(-0.1, vec![0.25, -0.005, 0.02, -0.06]).unwrap();
    let n = 3000;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let x = vec![
            0.5 + 9.5 * rng.gen::<f64>(),   // concentration, 0.5..10
            300.0 * rng.gen::<f64>(),       // distance, 0..300
            (rng.gen::<f64>() * 18.0).floor(), // years, 0..17
            if rng.gen::<bool>() { 1.0 } else { 0.0 },
        ];
        let t = margin(&x, &truth).unwrap().0;
        let y = if rng.gen::<f64>() < density_at(Label::Pos, t) { Label::Pos } else { Label::Neg };
        samples.push(LabeledSample::new(x, y).unwrap());
    }
    let data = Dataset::new(samples).unwrap();

    let fit = fit_mle(&data, &OptOptions::default()).unwrap();
    assert!(fit.converged, "fit did not converge: {} iterations", fit.n_iter);

    let report = robust_inference(&data, &fit.theta_hat).unwrap();
    let est = fit.theta_hat.to_vec();
    let truth_flat = truth.to_vec();
    for j in 0..5 {
        let dev = (est[j] - truth_flat[j]).abs();
        assert!(
            dev <= 4.0 * report.se[j],
            "coordinate {j}: estimate {} vs truth {} (se {})",
            est[j],
            truth_flat[j],
            report.se[j]
        );
        assert!(report.se[j] > 0.0 && report.se[j].is_finite());
    }
}
