//! Property tests for the algebraic invariants of the model and estimators.

use proptest::prelude::*;
use svmreg::model::{
    density_at, expected_neg_log_density, log_density_at, log_likelihood, log_density, margin,
    poly_features, predict_map, Dataset, Label, Margin, Theta,
};
use svmreg::{estimate_b, wald_test};

const LN2: f64 = std::f64::consts::LN_2;

fn finite_value() -> impl Strategy<Value = f64> {
    -30.0f64..30.0
}

fn label_strategy() -> impl Strategy<Value = Label> {
    prop::bool::ANY.prop_map(|b| if b { Label::Pos } else { Label::Neg })
}

proptest! {
    #[test]
    fn densities_normalize(t in finite_value()) {
        let total = density_at(Label::Pos, t) + density_at(Label::Neg, t);
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn label_symmetry(y in label_strategy(), t in finite_value()) {
        let lhs = density_at(y, t);
        let rhs = density_at(y.flip(), -t);
        prop_assert!((lhs - rhs).abs() <= 1e-15);
    }

    #[test]
    fn map_prediction_equals_sign_rule(
        x in prop::collection::vec(-5.0f64..5.0, 1..4),
        alpha in -3.0f64..3.0,
    ) {
        let theta = Theta::new(alpha, vec![1.0; x.len()]).unwrap();
        let t = margin(&x, &theta).unwrap().0;
        let sign_rule = if t >= 0.0 { Label::Pos } else { Label::Neg };
        prop_assert_eq!(predict_map(&x, &theta).unwrap(), sign_rule);
    }

    #[test]
    fn h2_is_bounded(p in 1e-6f64..1.0, t in -1e3f64..1e3) {
        let p = p.min(1.0 - 1e-6);
        let (_, _, h2) = expected_neg_log_density(p, Margin(t)).unwrap();
        prop_assert!(h2.abs() <= 1.0 - LN2 + 1e-12);
    }

    #[test]
    fn h_is_coercive_in_margin(p in 1e-3f64..1.0) {
        let p = p.min(1.0 - 1e-3);
        let (h_far_pos, _, _) = expected_neg_log_density(p, Margin(1e6)).unwrap();
        let (h_far_neg, _, _) = expected_neg_log_density(p, Margin(-1e6)).unwrap();
        let (h_zero, _, _) = expected_neg_log_density(p, Margin(0.0)).unwrap();
        prop_assert!(h_far_pos > h_zero);
        prop_assert!(h_far_neg > h_zero);
        // grid minimum exists and the far values dominate it
        let grid_min = (-100..=100)
            .map(|k| expected_neg_log_density(p, Margin(k as f64 * 0.1)).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(h_far_pos > grid_min && h_far_neg > grid_min);
    }

    #[test]
    fn poly_map_reproduces_kernel(
        x in prop::collection::vec(-2.0f64..2.0, 1..4),
        scale in -2.0f64..2.0,
        c in 0.0f64..3.0,
        u in 1u32..4,
    ) {
        let d = x.len();
        let x2: Vec<f64> = x.iter().map(|v| v * scale * 0.5 + 0.1).collect();
        let phi = poly_features(&x, c, u).unwrap();
        let phi2 = poly_features(&x2, c, u).unwrap();
        let dot: f64 = phi.iter().zip(&phi2).map(|(a, b)| a * b).sum();
        let raw: f64 = x.iter().zip(&x2).map(|(a, b)| a * b).sum();
        let kernel = (raw + c).powi(u as i32);
        let got = dot + c.powi(u as i32);
        let tol = 1e-12 * kernel.abs().max(1.0);
        prop_assert!((got - kernel).abs() <= tol, "d={d} kernel {kernel} vs {got}");
    }

    #[test]
    fn log_likelihood_matches_naive_sum(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..12),
        labels in prop::collection::vec(prop::bool::ANY, 12),
        alpha in -2.0f64..2.0,
        b1 in -2.0f64..2.0,
        b2 in -2.0f64..2.0,
    ) {
        let n = rows.len();
        let ys: Vec<f64> = labels.iter().take(n).map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let data = Dataset::from_rows(rows, ys).unwrap();
        let theta = Theta::new(alpha, vec![b1, b2]).unwrap();
        let naive = data
            .iter()
            .map(|s| log_density(s.y, &s.x, &theta).unwrap())
            .sum::<f64>() / n as f64;
        let fast = log_likelihood(&data, &theta).unwrap();
        prop_assert!((naive - fast).abs() <= 1e-12 * naive.abs().max(1.0));
    }

    #[test]
    fn score_outer_product_is_symmetric_psd(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..10),
        labels in prop::collection::vec(prop::bool::ANY, 10),
        alpha in -2.0f64..2.0,
        b1 in -2.0f64..2.0,
        b2 in -2.0f64..2.0,
        probe in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let n = rows.len();
        let ys: Vec<f64> = labels.iter().take(n).map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let data = Dataset::from_rows(rows, ys).unwrap();
        let theta = Theta::new(alpha, vec![b1, b2]).unwrap();
        let b = estimate_b(&data, &theta).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(b[(i, j)].to_bits(), b[(j, i)].to_bits());
            }
        }
        let v = nalgebra::DVector::from_vec(probe);
        prop_assert!(v.dot(&(&b * &v)) >= -1e-12);
    }

    #[test]
    fn wald_p_values_live_in_unit_interval(
        est in prop::collection::vec(-50.0f64..50.0, 1..6),
        se in prop::collection::vec(1e-3f64..10.0, 6),
    ) {
        let k = est.len();
        let (z, p) = wald_test(&est, &se[..k]).unwrap();
        for j in 0..k {
            prop_assert!(p[j] >= 0.0 && p[j] <= 1.0);
            prop_assert!((z[j] - est[j] / se[j]).abs() <= 1e-12 * z[j].abs().max(1.0));
        }
    }

    #[test]
    fn region_formulas_cover_the_line(t in -40.0f64..40.0) {
        let reference = if t.abs() <= 1.0 {
            t - (2.0 * t.cosh()).ln()
        } else if t > 1.0 {
            -(1.0 + (-(1.0 + t)).exp()).ln()
        } else {
            (t - 1.0) - (1.0 + (t - 1.0).exp()).ln()
        };
        prop_assert!((log_density_at(Label::Pos, t) - reference).abs() <= 1e-12);
    }
}
