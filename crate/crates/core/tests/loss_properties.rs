use approx::assert_relative_eq;
use gdsoftmax::loss::{
    beta_ce_eval, beta_ce_loss, gradient_magnitude, inflection_point, logit_curvature,
    softmax_probs, LabeledLogits, LossParams, Stability, DEFAULT_FIXED_SHIFT,
};
use proptest::prelude::*;

fn logits_and_class() -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(-8.0f64..8.0, 2..=20).prop_flat_map(|z| {
        let m = z.len();
        (Just(z), 0..m)
    })
}

fn beta() -> impl Strategy<Value = f64> {
    (-7.0f64..4.0).prop_map(f64::exp)
}

fn tau() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), 0.05f64..5.0]
}

/// Textbook cross-entropy on `z / tau` with its gradient.
fn standard_ce(z: &[f64], c: usize, tau: f64) -> (f64, Vec<f64>) {
    let s: Vec<f64> = z.iter().map(|v| v / tau).collect();
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let grad = e
        .iter()
        .enumerate()
        .map(|(i, v)| (v / total - f64::from(u8::from(i == c))) / tau)
        .collect();
    (top + total.ln() - s[c], grad)
}

proptest! {
    #[test]
    fn beta_one_is_standard_cross_entropy((z, c) in logits_and_class(), tau in tau()) {
        let params = LossParams::new(1.0, tau, Stability::MaxShift).unwrap();
        let got = beta_ce_eval(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let (loss, grad) = standard_ce(&z, c, tau);
        prop_assert!((got.loss - loss).abs() <= 1e-12 * loss.abs().max(1.0));
        for (a, b) in got.grad.iter().zip(&grad) {
            prop_assert!((a - b).abs() <= 1e-12 / tau);
        }
    }

    #[test]
    fn gradient_sums_to_zero((z, c) in logits_and_class(), beta in beta(), tau in tau()) {
        let params = LossParams::new(beta, tau, Stability::MaxShift).unwrap();
        let e = beta_ce_eval(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let sum: f64 = e.grad.iter().sum();
        prop_assert!(sum.abs() <= 1e-12 / tau, "sum = {sum}");
    }

    #[test]
    fn true_class_gradient_is_the_decay_magnitude((z, c) in logits_and_class(), beta in beta()) {
        let params = LossParams::with_beta(beta).unwrap();
        let e = beta_ce_eval(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let g = gradient_magnitude(e.p_true, beta).unwrap();
        prop_assert!((-e.grad[c] - g).abs() <= 1e-12, "{} vs {g}", -e.grad[c]);
    }

    #[test]
    fn loss_ignores_a_common_shift(
        (z, c) in logits_and_class(),
        beta in beta(),
        k in -50.0f64..50.0,
    ) {
        let params = LossParams::with_beta(beta).unwrap();
        let moved: Vec<f64> = z.iter().map(|v| v + k).collect();
        let a = beta_ce_eval(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let b = beta_ce_eval(&LabeledLogits::new(&moved, c).unwrap(), &params).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-10);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn loss_sits_between_the_margin_bounds(
        (z, c) in logits_and_class(),
        beta in beta(),
        tau in tau(),
    ) {
        let params = LossParams::new(beta, tau, Stability::MaxShift).unwrap();
        let j = beta_ce_loss(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let lower = z
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(_, v)| (v - z[c]) / tau)
            .fold(beta.ln(), f64::max);
        prop_assert!(lower <= j + 1e-12);
        prop_assert!(j <= lower + (z.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn small_temperature_approaches_the_hinge((z, c) in logits_and_class(), beta in beta()) {
        // tau * J -> max(0, max_{i != c} z_i - z_c) as tau -> 0.
        let tau = 1e-3;
        let params = LossParams::new(beta, tau, Stability::MaxShift).unwrap();
        let j = beta_ce_loss(&LabeledLogits::new(&z, c).unwrap(), &params).unwrap();
        let hinge = z
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(_, v)| v - z[c])
            .fold(tau * beta.ln(), f64::max);
        prop_assert!((tau * j - hinge).abs() <= tau * (z.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn fixed_shift_agrees_when_representable((z, c) in logits_and_class(), beta in beta()) {
        let fixed = LossParams::new(beta, 1.0, Stability::FixedShift(DEFAULT_FIXED_SHIFT)).unwrap();
        let max = LossParams::with_beta(beta).unwrap();
        let x = LabeledLogits::new(&z, c).unwrap();
        // With |z| <= 8 and u = 70 every exponential is a normal float.
        let a = beta_ce_eval(&x, &fixed).unwrap();
        let b = beta_ce_eval(&x, &max).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-12 * b.loss.abs().max(1.0));
        for (u, v) in a.grad.iter().zip(&b.grad) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn probabilities_are_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 2..=20), tau in tau()) {
        let p = softmax_probs(&z, tau).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn curvature_peaks_at_the_inflection_point(beta in beta(), offset in 0.001f64..0.4) {
        let p0 = inflection_point(beta).unwrap();
        let (peak, d3) = logit_curvature(p0, beta).unwrap();
        prop_assert!((peak - 0.25).abs() <= 1e-12);
        prop_assert!(d3.abs() <= 1e-12);
        for p in [p0 * (1.0 - offset), p0 + (1.0 - p0) * offset] {
            prop_assert!(logit_curvature(p, beta).unwrap().0 < peak);
        }
    }
}

#[test]
fn temperature_rescales_the_gradient() {
    let z = [1.5, -0.25, 0.75, 3.0];
    for beta in [0.01, 1.0, 20.0] {
        for tau in [0.1, 0.5, 2.0] {
            let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            let at_tau = beta_ce_eval(
                &LabeledLogits::new(&z, 2).unwrap(),
                &LossParams::new(beta, tau, Stability::MaxShift).unwrap(),
            )
            .unwrap();
            let at_one = beta_ce_eval(
                &LabeledLogits::new(&scaled, 2).unwrap(),
                &LossParams::with_beta(beta).unwrap(),
            )
            .unwrap();
            assert_relative_eq!(at_tau.loss, at_one.loss, max_relative = 1e-13);
            for (a, b) in at_tau.grad.iter().zip(&at_one.grad) {
                assert_relative_eq!(*a, b / tau, epsilon = 1e-13);
            }
        }
    }
}

#[test]
fn decay_factor_orders_the_loss() {
    // J grows with beta for fixed logits: the true-class term is weighted up.
    let z = [0.2, 1.0, -0.5];
    let losses: Vec<f64> = [0.001, 0.01, 0.1, 1.0, 5.0, 20.0]
        .iter()
        .map(|&b| {
            beta_ce_loss(
                &LabeledLogits::new(&z, 1).unwrap(),
                &LossParams::with_beta(b).unwrap(),
            )
            .unwrap()
        })
        .collect();
    assert!(losses.windows(2).all(|w| w[0] < w[1]), "{losses:?}");
}
