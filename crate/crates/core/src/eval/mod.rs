//! Probability-map post-processing and the evaluation metrics: distance
//! matched precision/recall/F1, threshold sweeps, Pearson correlation,
//! one-vs-rest ROC/AUC and confusion matrices.

mod centroids;
mod matching;
mod metrics;
mod report;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use centroids::{extract_centroids, fill_holes, label_components, DEFAULT_THRESHOLD};
pub use matching::{
    match_detections, match_detections_with, DetectionMatchReport, MatchStrategy, MatchedPair,
    DEFAULT_MATCH_RADIUS,
};
pub use metrics::{
    confusion_and_accuracy, pearson, roc_auc, roc_curve, ClassMetrics, ConfusionReport, RocCurve,
};
pub use report::{read_roc_csv, roc_to_csv, sweep_to_csv, write_json, write_text};
pub use sweep::{default_thresholds, evaluate_at, sweep_threshold, DetectionCounts, SweepRow, SweepTable};

/// A pixel position; `x` is the column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Per-pixel detector output in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub id: String,
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(id: impl Into<String>, width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height}"),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}
