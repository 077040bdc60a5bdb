use concorde::losses::{
    categorical_cross_entropy, count_loss_with_grad, detection_loss_with_grad, dice_loss_with_grad, DiceReduction,
    LossConfig,
};
use proptest::prelude::*;

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

fn assert_grad(analytic: &[f64], f: impl Fn(&[f64]) -> f64, x: &[f64]) {
    for i in 0..x.len() {
        let fd = central_difference(&f, x, i, 1e-6);
        let tol = 1e-6 + 1e-5 * fd.abs().max(analytic[i].abs());
        assert!((fd - analytic[i]).abs() <= tol, "component {i}: analytic {} vs fd {fd}", analytic[i]);
    }
}

fn binary(bits: &[bool]) -> Vec<f64> {
    bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

proptest! {
    #[test]
    fn dice_gradient_matches_finite_differences(
        pred in prop::collection::vec(0.0f64..1.0, 32),
        bits in prop::collection::vec(any::<bool>(), 32),
        per_image in any::<bool>(),
    ) {
        let target = binary(&bits);
        let reduction = if per_image { DiceReduction::PerImageMean } else { DiceReduction::Pooled };
        let (_, grad) = dice_loss_with_grad(&pred, &target, 2, reduction).unwrap();
        assert_grad(&grad, |p| dice_loss_with_grad(p, &target, 2, reduction).unwrap().0, &pred);
    }

    #[test]
    fn count_gradient_matches_away_from_kinks(
        truth in prop::collection::vec(0.0f64..40.0, 1..6),
        offsets in prop::collection::vec(prop_oneof![-20.0f64..-0.01, 0.01f64..20.0], 6),
    ) {
        let pred: Vec<f64> = truth.iter().zip(&offsets).map(|(t, o)| t + o).collect();
        let (_, grad) = count_loss_with_grad(&pred, &truth).unwrap();
        assert_grad(&grad, |p| count_loss_with_grad(p, &truth).unwrap().0, &pred);
    }

    #[test]
    fn detection_gradient_splits_into_map_and_counts(
        pred in prop::collection::vec(0.01f64..0.99, 18),
        bits in prop::collection::vec(any::<bool>(), 18),
        counts in prop::collection::vec(0.5f64..9.5, 2),
        k in 0.0f64..2.0,
    ) {
        let target = binary(&bits);
        let truth = [3.0, 7.0];
        let cfg = LossConfig { k, ..LossConfig::default() };
        let g = detection_loss_with_grad(&pred, &target, &counts, &truth, &cfg).unwrap();
        assert_grad(&g.pred, |p| detection_loss_with_grad(p, &target, &counts, &truth, &cfg).unwrap().loss.total, &pred);
        assert_grad(&g.counts, |c| detection_loss_with_grad(&pred, &target, c, &truth, &cfg).unwrap().loss.total, &counts);
    }

    #[test]
    fn cross_entropy_gradient_matches(
        raw in prop::collection::vec(0.05f64..1.0, 9),
        labels in prop::collection::vec(0usize..3, 3),
    ) {
        let probs: Vec<f64> = raw
            .chunks(3)
            .flat_map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(move |v| v / s).collect::<Vec<_>>()
            })
            .collect();
        let (_, grad) = categorical_cross_entropy(&probs, &labels, 3).unwrap();
        assert_grad(&grad, |p| categorical_cross_entropy(p, &labels, 3).unwrap().0, &probs);
    }
}

#[test]
fn count_term_scales_with_k() {
    let pred = vec![0.3; 8];
    let target = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let base = detection_loss_with_grad(&pred, &target, &[4.0, 1.0], &[2.0, 2.0], &LossConfig { k: 0.0, ..Default::default() }).unwrap();
    let weighted = detection_loss_with_grad(&pred, &target, &[4.0, 1.0], &[2.0, 2.0], &LossConfig::default()).unwrap();
    assert_eq!(base.pred, weighted.pred);
    assert!(base.counts.iter().all(|g| *g == 0.0));
    // |4-2| and |1-2| give a mean error of 1.5
    let count = 1.0 - 1.0 / 2.5;
    assert!((weighted.loss.total - base.loss.total - 0.3 * count).abs() < 1e-12);
}
