use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matching::prf;
use super::{extract_centroids, match_detections, Point, ProbabilityMap};

/// Pooled detection counts over a set of patches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionCounts {
    pub fn precision(&self) -> f64 {
        prf(self.tp, self.fp, self.fn_).0
    }

    pub fn recall(&self) -> f64 {
        prf(self.tp, self.fp, self.fn_).1
    }

    pub fn f1(&self) -> f64 {
        prf(self.tp, self.fp, self.fn_).2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub radius: f64,
    pub rows: Vec<SweepRow>,
    pub best_threshold: f64,
    pub best_f1: f64,
}

impl SweepTable {
    pub fn best(&self) -> &SweepRow {
        self.rows
            .iter()
            .find(|r| r.threshold == self.best_threshold)
            .expect("best threshold is one of the rows")
    }
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

fn check_inputs(maps: &[ProbabilityMap], gt: &[Vec<Point>]) -> Result<()> {
    if maps.len() != gt.len() {
        return Err(Error::LengthMismatch { left: maps.len(), right: gt.len() });
    }
    Ok(())
}

/// Micro-averaged counts at one threshold, matching each patch separately.
pub fn evaluate_at(
    maps: &[ProbabilityMap],
    gt: &[Vec<Point>],
    threshold: f64,
    radius: f64,
) -> Result<DetectionCounts> {
    check_inputs(maps, gt)?;
    let per_patch = maps
        .par_iter()
        .zip(gt.par_iter())
        .map(|(map, truth)| {
            let pred = extract_centroids(map, threshold);
            match_detections(truth, &pred, radius).map(|r| (r.tp, r.fp, r.fn_))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_patch
        .into_iter()
        .fold(DetectionCounts::default(), |acc, (tp, fp, fn_)| DetectionCounts {
            tp: acc.tp + tp,
            fp: acc.fp + fp,
            fn_: acc.fn_ + fn_,
        }))
}

/// Pooled precision/recall/F1 at each threshold; the best row is the
/// highest F1 with ties going to the larger threshold.
pub fn sweep_threshold(
    maps: &[ProbabilityMap],
    gt: &[Vec<Point>],
    thresholds: &[f64],
    radius: f64,
) -> Result<SweepTable> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("threshold list is empty".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::InvalidInput(format!("threshold {t} outside (0, 1)")));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let c = evaluate_at(maps, gt, threshold, radius)?;
        rows.push(SweepRow {
            threshold,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        });
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.f1.total_cmp(&b.f1).then(a.threshold.total_cmp(&b.threshold)))
        .expect("nonempty");
    Ok(SweepTable {
        radius,
        best_threshold: best.threshold,
        best_f1: best.f1,
        rows,
    })
}
