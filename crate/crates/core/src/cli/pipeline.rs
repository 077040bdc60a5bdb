//! Multi-step workflows shared by the command-line verbs, the examples and
//! the acceptance tests.

use serde::{Deserialize, Serialize};

use crate::data::{build_pseudo_mask, cell_patches, AnnotatedPatch, Category, PseudoMask, CLASSIFIER_PATCH_SIZE};
use crate::error::Result;
use crate::eval::{
    confusion_and_accuracy, extract_centroids, label_components, match_detections_with, pearson, roc_auc,
    sweep_threshold, ConfusionReport, DetectionMatchReport, Point, RocCurve, SweepTable,
};
use crate::models::{
    classify, predict_classifier_cascade, predict_detector, stage_labels, train_detector, Cascade, ClassifierStage,
    Detector, DetectorTraining, ParameterArchive, TrainConfig, CLASSIFIER_CLASSES,
};
use crate::synthgen::{generate, SynthConfig};

use super::EvalConfig;

/// Pseudo-masks of freshly generated dot layouts, for counter pretraining.
pub fn synthetic_masks(config: &SynthConfig, n: usize, radius: f64) -> Result<Vec<PseudoMask>> {
    generate(config, n)?
        .iter()
        .map(|p| build_pseudo_mask(&p.dots, p.height(), p.width(), radius))
        .collect()
}

pub fn pseudo_masks(patches: &[AnnotatedPatch], radius: f64) -> Result<Vec<PseudoMask>> {
    patches
        .iter()
        .map(|p| build_pseudo_mask(&p.dots, p.height(), p.width(), radius))
        .collect()
}

/// 28×28 crops around every annotated cell.
pub fn cells_of(patches: &[AnnotatedPatch]) -> Vec<AnnotatedPatch> {
    patches
        .iter()
        .flat_map(|p| cell_patches(p, CLASSIFIER_PATCH_SIZE))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMatch {
    pub id: String,
    pub predicted_count: f64,
    pub components: usize,
    pub report: DetectionMatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub patches: usize,
    pub threshold: f64,
    pub radius: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub best_threshold: f64,
    pub best_f1: f64,
    /// Mean |Cp − Ct| of the attached counter.
    pub count_mae: f64,
    pub count_pearson: Option<f64>,
    /// Mean |Cp − components| / max(components, 1) at `threshold`.
    pub count_component_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct DetectionEvaluation {
    pub summary: DetectionSummary,
    pub sweep: SweepTable,
    pub matches: Vec<PatchMatch>,
}

fn gt_points(p: &AnnotatedPatch) -> Vec<Point> {
    p.points().into_iter().map(Point::from).collect()
}

/// Detection metrics at `eval.threshold`, plus a threshold sweep.
pub fn evaluate_detector(detector: &Detector, patches: &[AnnotatedPatch], eval: &EvalConfig) -> Result<DetectionEvaluation> {
    let predictions = predict_detector(detector, patches)?;
    let maps: Vec<_> = predictions.iter().map(|p| p.map.clone()).collect();
    let gt: Vec<Vec<Point>> = patches.iter().map(gt_points).collect();
    let sweep = sweep_threshold(&maps, &gt, &eval.thresholds, eval.radius)?;
    let mut matches = Vec::with_capacity(patches.len());
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut rel = 0.0;
    for ((patch, pred), truth) in patches.iter().zip(&predictions).zip(&gt) {
        let centroids = extract_centroids(&pred.map, eval.threshold);
        let report = match_detections_with(truth, &centroids, eval.radius, eval.strategy)?;
        tp += report.tp;
        fp += report.fp;
        fn_ += report.fn_;
        let mask: Vec<bool> = pred.map.values().iter().map(|&v| v >= eval.threshold as f32).collect();
        let components = label_components(&mask, pred.map.width(), pred.map.height()).1;
        rel += (pred.count - components as f64).abs() / components.max(1) as f64;
        matches.push(PatchMatch {
            id: patch.id.clone(),
            predicted_count: pred.count,
            components,
            report,
        });
    }
    let n = patches.len().max(1) as f64;
    let cp: Vec<f64> = predictions.iter().map(|p| p.count).collect();
    let ct: Vec<f64> = patches.iter().map(|p| p.dots.len() as f64).collect();
    let count_mae = cp.iter().zip(&ct).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let counts = crate::eval::DetectionCounts { tp, fp, fn_ };
    Ok(DetectionEvaluation {
        summary: DetectionSummary {
            patches: patches.len(),
            threshold: eval.threshold,
            radius: eval.radius,
            tp,
            fp,
            fn_,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            best_threshold: sweep.best_threshold,
            best_f1: sweep.best_f1,
            count_mae,
            count_pearson: pearson(&cp, &ct).ok(),
            count_component_rel_error: rel / n,
        },
        sweep,
        matches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvaluation {
    pub classes: Vec<String>,
    pub confusion: ConfusionReport,
    /// `None` where a class has no examples (AUC undefined).
    pub auc: Vec<Option<f64>>,
    #[serde(skip)]
    pub roc: Vec<Option<RocCurve>>,
}

impl StageEvaluation {
    pub fn named_curves(&self) -> Vec<(String, RocCurve)> {
        self.classes
            .iter()
            .zip(&self.roc)
            .filter_map(|(n, c)| c.clone().map(|c| (n.clone(), c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeEvaluation {
    pub cells: usize,
    pub stage1: StageEvaluation,
    /// Stage 2 on the truly pSTAT+ cells.
    pub stage2: Option<StageEvaluation>,
    /// Final five-way labels against the truth, on the original
    /// (unbalanced) cell distribution.
    pub cascade: ConfusionReport,
    pub categories: Vec<String>,
}

fn evaluate_stage(stage: ClassifierStage, net: &crate::models::Network, cells: &[AnnotatedPatch]) -> Result<Option<StageEvaluation>> {
    let items = stage_labels(stage, cells)?;
    if items.is_empty() {
        return Ok(None);
    }
    let refs: Vec<&AnnotatedPatch> = items.iter().map(|&(i, _)| &cells[i]).collect();
    let labels: Vec<usize> = items.iter().map(|x| x.1).collect();
    let probs = classify(net, &refs, 64)?;
    let pred: Vec<usize> = probs.iter().map(|p| crate::models::argmax(p)).collect();
    let confusion = confusion_and_accuracy(&pred, &labels, CLASSIFIER_CLASSES)?;
    let roc = roc_auc(&probs, &labels, CLASSIFIER_CLASSES)?;
    Ok(Some(StageEvaluation {
        classes: stage.class_names().iter().map(|s| s.to_string()).collect(),
        confusion,
        auc: roc.iter().map(|c| c.as_ref().map(|c| c.auc)).collect(),
        roc,
    }))
}

/// Stagewise and cascaded accuracy, confusion matrices and one-vs-rest ROC
/// on single-cell patches.
pub fn evaluate_cascade(stage1: &ParameterArchive, stage2: &ParameterArchive, cells: &[AnnotatedPatch]) -> Result<CascadeEvaluation> {
    let cascade = Cascade::from_archives(stage1, stage2)?;
    let spec = crate::models::classifier_spec();
    let s1 = evaluate_stage(ClassifierStage::One, &stage1.to_network(&spec)?, cells)?
        .ok_or_else(|| crate::Error::EmptyDataset("no cells to classify".into()))?;
    let s2 = evaluate_stage(ClassifierStage::Two, &stage2.to_network(&spec)?, cells)?;
    let predictions = predict_classifier_cascade(&cascade, cells)?;
    let pred: Vec<usize> = predictions.iter().map(|p| p.category.index()).collect();
    let truth: Vec<usize> = cells
        .iter()
        .map(|c| c.dots.first().map(|d| d.category.index()).unwrap_or(0))
        .collect();
    Ok(CascadeEvaluation {
        cells: cells.len(),
        stage1: s1,
        stage2: s2,
        cascade: confusion_and_accuracy(&pred, &truth, Category::ALL.len())?,
        categories: Category::ALL.iter().map(|c| c.name().to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: f64,
    pub val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Best-F1 threshold on the test split.
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
pub struct AblationReport {
    pub seed: u64,
    pub patch_size: usize,
    pub counter_val_pearson: Option<f64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, k: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,val_f1,best_epoch,epochs_run,threshold,tp,fp,fn,precision,recall,f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.k, r.val_f1, r.best_epoch, r.epochs_run, r.threshold, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
            ));
        }
        out
    }
}

/// Trains one detector per count weight with otherwise identical settings
/// and scores each on `test` at its own best-F1 threshold.
pub fn run_ablation(
    train: &[AnnotatedPatch],
    val: &[AnnotatedPatch],
    test: &[AnnotatedPatch],
    counter: &ParameterArchive,
    cfg: &TrainConfig,
    weights: &[f64],
    eval: &EvalConfig,
) -> Result<(AblationReport, Vec<DetectorTraining>)> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &k in weights {
        let mut run_cfg = cfg.clone();
        run_cfg.loss.k = k;
        let run = train_detector(train, val, counter, &run_cfg)?;
        let detector = Detector::from_archives(&run.outcome.archive, &run.counter)?;
        let preds = predict_detector(&detector, test)?;
        let maps: Vec<_> = preds.into_iter().map(|p| p.map).collect();
        let gt: Vec<Vec<Point>> = test.iter().map(gt_points).collect();
        let table = sweep_threshold(&maps, &gt, &eval.thresholds, eval.radius)?;
        let best = table.best().clone();
        let m = &run.outcome.archive.manifest.metrics;
        rows.push(AblationRow {
            k,
            val_f1: m["val_f1"],
            best_epoch: run.outcome.best_epoch,
            epochs_run: m["epochs_run"] as usize,
            threshold: best.threshold,
            tp: best.tp,
            fp: best.fp,
            fn_: best.fn_,
            precision: best.precision,
            recall: best.recall,
            f1: best.f1,
        });
        runs.push(run);
    }
    let size = train.first().map(|p| p.width()).unwrap_or(0);
    Ok((
        AblationReport {
            seed: cfg.seed,
            patch_size: size,
            counter_val_pearson: counter.manifest.metrics.get("val_pearson").copied(),
            rows,
        },
        runs,
    ))
}
