//! Objective functions for the counter and the detector.
//!
//! All losses are evaluated in `f64` and come with analytic gradients. The
//! dice term pools its sums over the whole batch into a single ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default weight of the count term in the detection objective.
pub const DEFAULT_COUNT_WEIGHT: f64 = 0.3;

/// How the dice term aggregates over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceReduction {
    /// One ratio over all pixels of all images.
    #[default]
    Pooled,
    /// Mean of per-image ratios (ablation only).
    PerImageMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight `K` of the count term. `0` gives the dice-only ablation.
    pub k: f64,
    pub dice: DiceReduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_COUNT_WEIGHT,
            dice: DiceReduction::Pooled,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("count weight K must be >= 0, got {}", self.k)));
        }
        Ok(())
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// `1 - 1 / (1 + mean_j |pred_j - truth_j|)`.
pub fn count_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(count_loss_with_grad(pred, truth)?.0)
}

/// Count loss and its gradient with respect to `pred`. The subgradient at
/// `pred_j == truth_j` is taken as zero.
pub fn count_loss_with_grad(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidInput("count loss needs at least one image".into()));
    }
    if let Some(t) = truth.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidInput(format!("true count must be >= 0, got {t}")));
    }
    let b = pred.len() as f64;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / b;
    let denom = 1.0 + mae;
    let value = 1.0 - 1.0 / denom;
    let scale = 1.0 / (b * denom * denom);
    let grad = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect();
    Ok((value, grad))
}

fn check_dice_inputs(pred: &[f64], target: &[f64], batch: usize) -> Result<()> {
    check_lengths(pred.len(), target.len())?;
    if batch == 0 || pred.len() % batch != 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{batch} images of equal size"),
            found: format!("{} values", pred.len()),
        });
    }
    if let Some((index, &value)) = target
        .iter()
        .enumerate()
        .find(|(_, &g)| g != 0.0 && g != 1.0)
    {
        return Err(Error::NotBinary { index, value });
    }
    Ok(())
}

/// Smoothed dice loss `1 - 2 Σpg / (1 + Σp + Σg)` with batch-pooled sums.
/// `pred` and `target` hold `batch` images back to back.
pub fn dice_loss(pred: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    Ok(dice_loss_with_grad(pred, target, batch, DiceReduction::Pooled)?.0)
}

pub fn dice_loss_with_grad(
    pred: &[f64],
    target: &[f64],
    batch: usize,
    reduction: DiceReduction,
) -> Result<(f64, Vec<f64>)> {
    check_dice_inputs(pred, target, batch)?;
    match reduction {
        DiceReduction::Pooled => Ok(dice_ratio_with_grad(pred, target, 1.0)),
        DiceReduction::PerImageMean => {
            let n = pred.len() / batch;
            let mut total = 0.0;
            let mut grad = Vec::with_capacity(pred.len());
            for (p, g) in pred.chunks(n).zip(target.chunks(n)) {
                let (v, gr) = dice_ratio_with_grad(p, g, 1.0 / batch as f64);
                total += v;
                grad.extend(gr);
            }
            Ok((total / batch as f64, grad))
        }
    }
}

/// Returns `(1 - 2S/D, grad * weight)` for one pooled ratio.
fn dice_ratio_with_grad(pred: &[f64], target: &[f64], weight: f64) -> (f64, Vec<f64>) {
    let mut overlap = 0.0;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for (&p, &g) in pred.iter().zip(target) {
        overlap += p * g;
        sum_p += p;
        sum_g += g;
    }
    let denom = 1.0 + sum_p + sum_g;
    let value = 1.0 - 2.0 * overlap / denom;
    let d2 = denom * denom;
    let grad = target
        .iter()
        .map(|&g| -2.0 * weight * (g * denom - overlap) / d2)
        .collect();
    (value, grad)
}

/// Detection objective with its two addends kept for logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionLoss {
    pub total: f64,
    pub dice: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionLossGrad {
    pub loss: DetectionLoss,
    /// Gradient with respect to the probability map.
    pub pred: Vec<f64>,
    /// Gradient with respect to the predicted counts.
    pub counts: Vec<f64>,
}

/// `dice_loss(P, G) + K * count_loss(Cp, Ct)`.
pub fn detection_loss(
    pred: &[f64],
    target: &[f64],
    pred_counts: &[f64],
    true_counts: &[f64],
    cfg: &LossConfig,
) -> Result<DetectionLoss> {
    Ok(detection_loss_with_grad(pred, target, pred_counts, true_counts, cfg)?.loss)
}

pub fn detection_loss_with_grad(
    pred: &[f64],
    target: &[f64],
    pred_counts: &[f64],
    true_counts: &[f64],
    cfg: &LossConfig,
) -> Result<DetectionLossGrad> {
    cfg.validate()?;
    let batch = pred_counts.len();
    let (dice, dice_grad) = dice_loss_with_grad(pred, target, batch, cfg.dice)?;
    let (count, mut count_grad) = count_loss_with_grad(pred_counts, true_counts)?;
    for g in &mut count_grad {
        *g *= cfg.k;
    }
    Ok(DetectionLossGrad {
        loss: DetectionLoss {
            total: dice + cfg.k * count,
            dice,
            count,
        },
        pred: dice_grad,
        counts: count_grad,
    })
}

/// Categorical cross-entropy on probabilities, clipped to `[eps, 1 - eps]`.
/// Returns the mean loss over the batch and the gradient with respect to
/// the probabilities.
pub fn categorical_cross_entropy(probs: &[f64], labels: &[usize], classes: usize) -> Result<(f64, Vec<f64>)> {
    const EPS: f64 = 1e-7;
    if probs.len() != labels.len() * classes {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {classes}", labels.len()),
            found: format!("{} values", probs.len()),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("cross-entropy needs at least one sample".into()));
    }
    let b = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidInput(format!("label {label} out of range for {classes} classes")));
        }
        let p = probs[i * classes + label];
        let clipped = p.clamp(EPS, 1.0 - EPS);
        loss -= clipped.ln();
        if p > EPS && p < 1.0 - EPS {
            grad[i * classes + label] = -1.0 / (p * b);
        }
    }
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-12)
    }

    #[test]
    fn count_loss_examples() {
        assert_eq!(count_loss(&[3.0, 7.5], &[3.0, 7.5]).unwrap(), 0.0);
        assert_eq!(count_loss(&[5.0], &[4.0]).unwrap(), 0.5);
        assert!(close(count_loss(&[2.0, 10.0], &[4.0, 6.0]).unwrap(), 0.75, 1e-15));
    }

    #[test]
    fn count_loss_errors() {
        assert!(matches!(count_loss(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(count_loss(&[1.0], &[-1.0]).is_err());
        assert!(count_loss(&[], &[]).is_err());
    }

    #[test]
    fn count_subgradient_at_kink_is_zero() {
        let (_, g) = count_loss_with_grad(&[3.0, 5.0], &[3.0, 4.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(g[1] > 0.0);
    }

    #[test]
    fn dice_examples() {
        let ones = [1.0; 4];
        assert!(close(dice_loss(&ones, &ones, 1).unwrap(), 1.0 / 9.0, 1e-15));
        assert_eq!(dice_loss(&[0.0; 4], &[1.0, 0.0, 1.0, 1.0], 1).unwrap(), 1.0);
        assert_eq!(dice_loss(&[0.0; 4], &[0.0; 4], 1).unwrap(), 1.0);
    }

    #[test]
    fn dice_errors() {
        assert!(matches!(dice_loss(&[0.5; 4], &[0.5; 4], 1), Err(Error::NotBinary { .. })));
        assert!(dice_loss(&[0.5; 4], &[0.0; 3], 1).is_err());
        assert!(dice_loss(&[0.5; 5], &[0.0; 5], 2).is_err());
    }

    #[test]
    fn pooled_and_per_image_differ() {
        let p = [0.9, 0.1, 0.0, 0.0];
        let g = [1.0, 0.0, 0.0, 0.0];
        let pooled = dice_loss_with_grad(&p, &g, 2, DiceReduction::Pooled).unwrap().0;
        let mean = dice_loss_with_grad(&p, &g, 2, DiceReduction::PerImageMean).unwrap().0;
        // image 2 is empty-empty: its own ratio is 1, dragging the mean up
        assert!(mean > pooled);
    }

    #[test]
    fn detection_examples() {
        let ones = [1.0; 4];
        let cfg = LossConfig::default();
        let l = detection_loss(&ones, &ones, &[4.0], &[4.0], &cfg).unwrap();
        assert!(close(l.total, 1.0 / 9.0, 1e-15));
        let l = detection_loss(&ones, &ones, &[5.0], &[4.0], &cfg).unwrap();
        assert!(close(l.total, 1.0 / 9.0 + 0.15, 1e-15));
        assert!(close(l.count, 0.5, 1e-15));
        let k0 = LossConfig { k: 0.0, ..cfg };
        let l = detection_loss(&[0.3, 0.7, 0.2, 0.9], &[0.0, 1.0, 0.0, 1.0], &[9.0], &[1.0], &k0).unwrap();
        assert_eq!(l.total, dice_loss(&[0.3, 0.7, 0.2, 0.9], &[0.0, 1.0, 0.0, 1.0], 1).unwrap());
    }

    #[test]
    fn cross_entropy_gradient() {
        let probs = [0.2, 0.5, 0.3, 0.6, 0.3, 0.1];
        let (l, g) = categorical_cross_entropy(&probs, &[1, 0], 3).unwrap();
        assert!(close(l, -(0.5f64.ln() + 0.6f64.ln()) / 2.0, 1e-14));
        assert!(close(g[1], -1.0 / (0.5 * 2.0), 1e-14));
        assert_eq!(g[0], 0.0);
    }

    proptest! {
        #[test]
        fn count_loss_bounded_and_symmetric(
            diffs in proptest::collection::vec(-50.0f64..50.0, 1..16),
            base in 0.0f64..100.0,
        ) {
            let truth = vec![base; diffs.len()];
            let pred: Vec<f64> = diffs.iter().map(|d| base + d).collect();
            let mirrored: Vec<f64> = diffs.iter().map(|d| base - d).collect();
            let l = count_loss(&pred, &truth).unwrap();
            prop_assert!((0.0..1.0).contains(&l));
            let lm = count_loss(&mirrored, &truth).unwrap();
            prop_assert!((l - lm).abs() < 1e-12);
            let mut rp = pred.clone();
            rp.reverse();
            prop_assert!((count_loss(&rp, &truth).unwrap() - l).abs() < 1e-12);
            prop_assert_eq!(l == 0.0, diffs.iter().all(|d| *d == 0.0));
        }

        #[test]
        fn dice_bounded_and_decreasing_on_foreground(
            data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..64),
            bump in 0.01f64..0.5,
        ) {
            let p: Vec<f64> = data.iter().map(|d| d.0).collect();
            let g: Vec<f64> = data.iter().map(|d| d.1 as u8 as f64).collect();
            let l = dice_loss(&p, &g, 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
            if let Some(i) = g.iter().position(|&v| v == 1.0) {
                let mut q = p.clone();
                q[i] = (q[i] + bump).min(1.0);
                prop_assume!(q[i] > p[i]);
                prop_assert!(dice_loss(&q, &g, 1).unwrap() < l);
            }
        }

        #[test]
        fn detection_loss_affine_in_k(
            k in 0.0f64..2.0,
            p in proptest::collection::vec(0.0f64..1.0, 8),
            cp in 0.0f64..20.0,
        ) {
            let g: Vec<f64> = (0..8).map(|i| (i % 3 == 0) as u8 as f64).collect();
            let ct = [3.0];
            let cfg = LossConfig { k, ..Default::default() };
            let l = detection_loss(&p, &g, &[cp], &ct, &cfg).unwrap();
            let dice = dice_loss(&p, &g, 1).unwrap();
            let count = count_loss(&[cp], &ct).unwrap();
            prop_assert!((l.total - (dice + k * count)).abs() < 1e-12);
        }
    }
}
