use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Points ordered from (0,0) to (1,1).
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Score threshold producing each point; the first point uses +inf.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// One-vs-rest ROC for a binary labelling. `None` when either class is absent.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Option<RocCurve>> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: positive.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        fpr.push(fp as f64 / n_neg as f64);
        tpr.push(tp as f64 / n_pos as f64);
        thresholds.push(s);
    }
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
        .sum();
    Ok(Some(RocCurve { fpr, tpr, thresholds, auc }))
}

/// Per-category one-vs-rest curves from row-major `scores[item][category]`.
pub fn roc_auc(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Vec<Option<RocCurve>>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset("roc_auc needs at least one label".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    for row in scores {
        if row.len() != classes {
            return Err(Error::ShapeMismatch {
                expected: format!("{classes} scores per item"),
                found: format!("{}", row.len()),
            });
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidInput(format!("label {bad} outside {classes} classes")));
    }
    (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            roc_curve(&s, &pos)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    /// `matrix[truth][predicted]`.
    pub matrix: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn confusion_and_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionReport> {
    if truth.is_empty() {
        return Err(Error::EmptyDataset("confusion matrix needs at least one label".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let mut matrix = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidInput(format!("label outside {classes} classes")));
        }
        matrix[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| matrix[c][c]).sum();
    let per_class = (0..classes)
        .map(|c| {
            let tp = matrix[c][c];
            let support: usize = matrix[c].iter().sum();
            let predicted: usize = matrix.iter().map(|row| row[c]).sum();
            let (precision, recall, f1) = super::matching::prf(tp, predicted - tp, support - tp);
            ClassMetrics { precision, recall, f1, support }
        })
        .collect();
    Ok(ConfusionReport {
        matrix,
        accuracy: correct as f64 / truth.len() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        // Means 2 and 7/3; covariance sum 3, spreads 2 and 14/3.
        let oracle = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        let r = pearson(&x, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn separated_scores_give_unit_auc() {
        let roc = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap().unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.fpr.first(), Some(&0.0));
        assert_eq!(roc.tpr.last(), Some(&1.0));
    }

    #[test]
    fn constant_scores_give_chance() {
        let roc = roc_curve(&[0.5; 6], &[true, false, true, false, false, true]).unwrap().unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.fpr.len(), 2);
    }

    #[test]
    fn auc_matches_pair_counting() {
        // Mann-Whitney: fraction of (pos, neg) pairs ranked correctly, ties half.
        let s = [0.3, 0.7, 0.7, 0.1, 0.9, 0.4];
        let y = [true, false, true, false, true, false];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if y[i] && !y[j] {
                    pairs += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        let roc = roc_curve(&s, &y).unwrap().unwrap();
        assert!((roc.auc - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn absent_category_is_undefined() {
        let scores = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0]];
        let out = roc_auc(&scores, &[0, 1], 3).unwrap();
        assert!(out[0].is_some() && out[1].is_some());
        assert!(out[2].is_none());
    }

    #[test]
    fn toy_accuracy() {
        let truth = [0, 0, 1, 1, 2, 2];
        let pred = [0, 0, 1, 2, 2, 2];
        let rep = confusion_and_accuracy(&pred, &truth, 3).unwrap();
        assert!((rep.accuracy - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(rep.matrix[1][2], 1);
        assert_eq!(rep.per_class[1].recall, 0.5);
        assert_eq!(rep.per_class[2].precision, 2.0 / 3.0);
        assert_eq!(rep.per_class[0].support, 2);
    }
}
