use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment_mask, augment_patch, build_pseudo_mask, AnnotatedPatch, AugmentationConfig, Category, PseudoMask, DEFAULT_MASK_RADIUS};
use crate::error::{Error, Result};
use crate::eval::{confusion_and_accuracy, default_thresholds, pearson, sweep_threshold, Point, DEFAULT_MATCH_RADIUS};
use crate::losses::{categorical_cross_entropy, count_loss, count_loss_with_grad, detection_loss_with_grad, LossConfig};
use crate::nn::{Adam, Tensor};

use super::checkpoint::{dataset_fingerprint, mask_fingerprint, ParameterArchive, TrainingLog};
use super::network::{Mode, Network};
use super::predict::{probability_maps, Detector};
use super::spec::{classifier_spec, counter_spec, detector_spec_sized, CLASSIFIER_CLASSES};

/// How many balanced batches make up one classifier epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochLength {
    /// The largest category is visited once per epoch.
    #[default]
    LargestCategory,
    /// The smallest category is visited once per epoch.
    SmallestCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub augment: AugmentationConfig,
    /// Keep the attached counter fixed while training the detector.
    pub counter_frozen: bool,
    pub epoch_length: EpochLength,
    pub mask_radius: f64,
    /// Thresholds swept when scoring detector validation F1.
    pub thresholds: Vec<f64>,
    pub match_radius: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 4,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            loss: LossConfig::default(),
            augment: AugmentationConfig::default(),
            counter_frozen: true,
            epoch_length: EpochLength::LargestCategory,
            mask_radius: DEFAULT_MASK_RADIUS,
            thresholds: default_thresholds(),
            match_radius: DEFAULT_MATCH_RADIUS,
        }
    }
}

impl TrainConfig {
    /// Defaults for the classifiers: batches of 30 (10 per category).
    pub fn classifier() -> Self {
        Self {
            batch_size: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.mask_radius > 0.0) || !(self.match_radius > 0.0) {
            return Err(Error::Config("mask_radius and match_radius must be positive".into()));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Config("thresholds must be a nonempty subset of (0, 1)".into()));
        }
        self.loss.validate()?;
        self.augment.validate()
    }

    fn snapshot(&self, extra: serde_json::Value) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    }
}

/// A trained network with its archive and per-epoch log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub archive: ParameterArchive,
    pub log: TrainingLog,
    pub best_epoch: usize,
}

/// Early-stopping bookkeeping; keeps the best parameters seen so far.
struct BestTracker {
    score: f64,
    epoch: usize,
    params: Option<Network>,
    stale: usize,
}

impl BestTracker {
    fn new() -> Self {
        Self { score: f64::NEG_INFINITY, epoch: 0, params: None, stale: 0 }
    }

    /// Returns true when training should stop.
    fn observe(&mut self, epoch: usize, score: f64, net: &Network, patience: usize) -> bool {
        if score > self.score || self.params.is_none() {
            self.score = score;
            self.epoch = epoch;
            self.params = Some(net.clone());
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale > patience
    }
}

fn diverged(stage: &str, epoch: usize, detail: String) -> Error {
    Error::Diverged { stage: stage.into(), epoch, detail }
}

fn square_size(w: usize, h: usize, what: &str) -> Result<usize> {
    if w != h {
        return Err(Error::InvalidInput(format!("{what} must be square, got {w}x{h}")));
    }
    Ok(w)
}

fn batches(order: &[usize], batch: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch)
}

fn mask_tensor(masks: &[&PseudoMask]) -> Tensor {
    let (w, h) = (masks[0].mask.width(), masks[0].mask.height());
    let mut data = Vec::with_capacity(masks.len() * w * h);
    for m in masks {
        data.extend(m.mask.to_f32());
    }
    Tensor::from_vec([masks.len(), 1, h, w], data)
}

/// Planar `[B, C, H, W]` tensor from patch images.
pub fn patch_tensor(patches: &[&AnnotatedPatch]) -> Tensor {
    let p = patches[0];
    let (w, h, c) = (p.image.width(), p.image.height(), p.image.channels());
    let mut data = Vec::with_capacity(patches.len() * w * h * c);
    for p in patches {
        data.extend(p.image.to_planar());
    }
    Tensor::from_vec([patches.len(), c, h, w], data)
}

fn counts_of(output: &Tensor) -> Vec<f64> {
    output.data().iter().map(|&v| v as f64).collect()
}

/// Counter predictions on unaugmented masks, in order.
fn predict_counts(net: &Network, masks: &[PseudoMask], batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(batch.max(1)) {
        let refs: Vec<&PseudoMask> = chunk.iter().collect();
        out.extend(counts_of(&net.predict(mask_tensor(&refs))?));
    }
    Ok(out)
}

fn truth_counts(masks: &[PseudoMask]) -> Vec<f64> {
    masks.iter().map(|m| m.count as f64).collect()
}

/// Pearson correlation, reported as 0 when either side is constant.
fn pearson_or_zero(x: &[f64], y: &[f64]) -> Result<f64> {
    match pearson(x, y) {
        Ok(r) => Ok(r),
        Err(Error::ZeroVariance(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Trains the counter to regress the number of dots from (augmented)
/// pseudo-masks with the count loss. Early stopping tracks the validation
/// count loss; the validation Pearson correlation is stored in the archive.
pub fn pretrain_counter(train: &[PseudoMask], val: &[PseudoMask], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = train.first().ok_or_else(|| Error::EmptyDataset("no training masks".into()))?;
    if val.is_empty() {
        return Err(Error::EmptyDataset("no validation masks".into()));
    }
    let n = square_size(first.mask.width(), first.mask.height(), "masks")?;
    for m in train.iter().chain(val) {
        if m.mask.width() != n || m.mask.height() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", m.mask.width(), m.mask.height()),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::glorot(counter_spec(n)?, &mut rng)?;
    let mut adam = Adam::new(cfg.learning_rate as f32);
    let mut log = TrainingLog::new(&["epoch", "train_loss", "val_loss", "val_pearson"]);
    let mut best = BestTracker::new();
    let (train_ct, val_ct) = (truth_counts(train), truth_counts(val));

    let evaluate = |net: &Network| -> Result<(f64, f64)> {
        let cp = predict_counts(net, val, cfg.batch_size)?;
        Ok((count_loss(&cp, &val_ct)?, pearson_or_zero(&cp, &val_ct)?))
    };
    let init_train = count_loss(&predict_counts(&net, train, cfg.batch_size)?, &train_ct)?;
    let (val_loss, val_r) = evaluate(&net)?;
    log.push(vec![0.0, init_train, val_loss, val_r]);
    best.observe(0, -val_loss, &net, cfg.patience);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in batches(&order, cfg.batch_size) {
            let images: Vec<f32> = idx
                .iter()
                .flat_map(|&i| augment_mask(&train[i], &cfg.augment, &mut rng).into_vec())
                .collect();
            let input = Tensor::from_vec([idx.len(), 1, n, n], images);
            let truth: Vec<f64> = idx.iter().map(|&i| train_ct[i]).collect();
            let trace = net.forward(input, Mode::Train, &mut rng)?;
            let (loss, grad) = count_loss_with_grad(&counts_of(trace.output()), &truth)?;
            if !loss.is_finite() {
                return Err(diverged("counter", epoch, format!("count loss {loss}")));
            }
            total += loss * idx.len() as f64;
            let grad = Tensor::from_vec([idx.len(), 1, 1, 1], grad.iter().map(|&g| g as f32).collect());
            let mut grads = net.zero_gradients();
            net.backward(&trace, grad, Some(&mut grads), false)?;
            if !grads.is_finite() {
                return Err(diverged("counter", epoch, "non-finite gradient".into()));
            }
            adam.update(net.param_slices_mut(), grads.slices());
        }
        let (val_loss, val_r) = evaluate(&net)?;
        if !val_loss.is_finite() {
            return Err(diverged("counter", epoch, format!("validation loss {val_loss}")));
        }
        log.push(vec![epoch as f64, total / train.len() as f64, val_loss, val_r]);
        if best.observe(epoch, -val_loss, &net, cfg.patience) {
            break;
        }
    }
    let net = best.params.take().expect("initial state recorded");
    let (val_loss, val_r) = evaluate(&net)?;
    let metrics = BTreeMap::from([
        ("val_count_loss".to_string(), val_loss),
        ("val_pearson".to_string(), val_r),
        ("best_epoch".to_string(), best.epoch as f64),
        ("epochs_run".to_string(), (log.rows.len() - 1) as f64),
    ]);
    let training = cfg.snapshot(serde_json::json!({"procedure": "pretrain_counter", "train_masks": train.len(), "val_masks": val.len()}));
    let fp = mask_fingerprint(train);
    Ok(TrainOutcome {
        archive: ParameterArchive::from_network(&net, training, fp, metrics),
        network: net,
        log,
        best_epoch: best.epoch,
    })
}

/// Detector training result; `counter` differs from the input archive only
/// when the counter was left trainable.
#[derive(Debug, Clone)]
pub struct DetectorTraining {
    pub outcome: TrainOutcome,
    pub counter: ParameterArchive,
    pub val_threshold: f64,
}

fn detection_targets(patches: &[AnnotatedPatch], radius: f64) -> Result<Vec<PseudoMask>> {
    patches
        .iter()
        .map(|p| build_pseudo_mask(&p.dots, p.height(), p.width(), radius))
        .collect()
}

fn gt_points(patches: &[AnnotatedPatch]) -> Vec<Vec<Point>> {
    patches
        .iter()
        .map(|p| p.points().into_iter().map(Point::from).collect())
        .collect()
}

/// Trains the detector with the counter attached to its output. With
/// `cfg.loss.k == 0` the count term is dropped (dice-only ablation).
/// Validation F1 is the best over `cfg.thresholds`.
pub fn train_detector(
    train: &[AnnotatedPatch],
    val: &[AnnotatedPatch],
    counter: &ParameterArchive,
    cfg: &TrainConfig,
) -> Result<DetectorTraining> {
    cfg.validate()?;
    let first = train.first().ok_or_else(|| Error::EmptyDataset("no training patches".into()))?;
    if val.is_empty() {
        return Err(Error::EmptyDataset("no validation patches".into()));
    }
    let n = square_size(first.width(), first.height(), "patches")?;
    for p in train.iter().chain(val) {
        if p.width() != n || p.height() != n || p.image.channels() != 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}x3"),
                found: format!("{}x{}x{}", p.width(), p.height(), p.image.channels()),
            });
        }
    }
    let mut counter_net = counter.to_network(&counter_spec(n)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut det = Network::glorot(detector_spec_sized(n)?, &mut rng)?;
    let mut adam = Adam::new(cfg.learning_rate as f32);
    let mut counter_adam = Adam::new(cfg.learning_rate as f32);
    let targets = detection_targets(train, cfg.mask_radius)?;
    let val_gt = gt_points(val);
    let flips_only = AugmentationConfig { zoom_prob: 0.0, ..cfg.augment.clone() };

    let mut log = TrainingLog::new(&["epoch", "loss", "dice", "count", "val_f1", "val_threshold"]);
    let mut best = BestTracker::new();
    let mut best_counter = counter_net.clone();

    let validate = |det: &Network, counter: &Network| -> Result<(f64, f64)> {
        let detector = Detector::new(det.clone(), counter.clone())?;
        let maps = probability_maps(&detector, val)?;
        let table = sweep_threshold(&maps, &val_gt, &cfg.thresholds, cfg.match_radius)?;
        Ok((table.best_f1, table.best_threshold))
    };

    // Initial loss on unaugmented training data.
    let mut init = (0.0, 0.0, 0.0);
    let all: Vec<usize> = (0..train.len()).collect();
    for idx in batches(&all, cfg.batch_size) {
        let patches: Vec<&AnnotatedPatch> = idx.iter().map(|&i| &train[i]).collect();
        let p = det.predict(patch_tensor(&patches))?;
        let cp = counter_net.predict(p.clone())?;
        let g: Vec<f64> = idx.iter().flat_map(|&i| targets[i].mask.to_f32()).map(f64::from).collect();
        let ct: Vec<f64> = idx.iter().map(|&i| targets[i].count as f64).collect();
        let pv: Vec<f64> = p.data().iter().map(|&v| v as f64).collect();
        let l = detection_loss_with_grad(&pv, &g, &counts_of(&cp), &ct, &cfg.loss)?.loss;
        let w = idx.len() as f64 / train.len() as f64;
        init = (init.0 + l.total * w, init.1 + l.dice * w, init.2 + l.count * w);
    }
    let (f1, thr) = validate(&det, &counter_net)?;
    log.push(vec![0.0, init.0, init.1, init.2, f1, thr]);
    best.observe(0, f1, &det, cfg.patience);
    let mut best_threshold = thr;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for idx in batches(&order, cfg.batch_size) {
            let augmented: Vec<AnnotatedPatch> = idx
                .iter()
                .map(|&i| augment_patch(&train[i], &flips_only, &mut rng))
                .collect();
            let masks = detection_targets(&augmented, cfg.mask_radius)?;
            let refs: Vec<&AnnotatedPatch> = augmented.iter().collect();
            let trace = det.forward(patch_tensor(&refs), Mode::Train, &mut rng)?;
            let p = trace.output().clone();
            let counter_trace = counter_net.forward(p.clone(), Mode::Eval, &mut rng)?;
            let g: Vec<f64> = masks.iter().flat_map(|m| m.mask.to_f32()).map(f64::from).collect();
            let ct: Vec<f64> = masks.iter().map(|m| m.count as f64).collect();
            let pv: Vec<f64> = p.data().iter().map(|&v| v as f64).collect();
            let lg = detection_loss_with_grad(&pv, &g, &counts_of(counter_trace.output()), &ct, &cfg.loss)?;
            if !lg.loss.total.is_finite() {
                return Err(diverged("detector", epoch, format!("detection loss {}", lg.loss.total)));
            }
            let b = idx.len() as f64;
            sums = (sums.0 + lg.loss.total * b, sums.1 + lg.loss.dice * b, sums.2 + lg.loss.count * b);

            let mut grad_p = Tensor::from_vec(p.shape(), lg.pred.iter().map(|&v| v as f32).collect());
            if cfg.loss.k > 0.0 {
                let grad_cp = Tensor::from_vec([idx.len(), 1, 1, 1], lg.counts.iter().map(|&v| v as f32).collect());
                let mut counter_grads = (!cfg.counter_frozen).then(|| counter_net.zero_gradients());
                let through = counter_net
                    .backward(&counter_trace, grad_cp, counter_grads.as_mut(), true)?
                    .expect("input gradient requested");
                grad_p.add_assign(&through);
                if let Some(cg) = counter_grads {
                    counter_adam.update(counter_net.param_slices_mut(), cg.slices());
                }
            }
            let mut grads = det.zero_gradients();
            det.backward(&trace, grad_p, Some(&mut grads), false)?;
            if !grads.is_finite() {
                return Err(diverged("detector", epoch, "non-finite gradient".into()));
            }
            adam.update(det.param_slices_mut(), grads.slices());
        }
        let m = train.len() as f64;
        let (f1, thr) = validate(&det, &counter_net)?;
        log.push(vec![epoch as f64, sums.0 / m, sums.1 / m, sums.2 / m, f1, thr]);
        let improved = f1 > best.score;
        let stop = best.observe(epoch, f1, &det, cfg.patience);
        if improved {
            best_counter = counter_net.clone();
            best_threshold = thr;
        }
        if stop {
            break;
        }
    }
    let det = best.params.take().expect("initial state recorded");
    let metrics = BTreeMap::from([
        ("val_f1".to_string(), best.score),
        ("val_threshold".to_string(), best_threshold),
        ("best_epoch".to_string(), best.epoch as f64),
        ("epochs_run".to_string(), (log.rows.len() - 1) as f64),
    ]);
    let training = cfg.snapshot(serde_json::json!({
        "procedure": "train_detector",
        "counter_fingerprint": counter.fingerprint(),
        "counter_checksum": counter.manifest.parameter_checksum,
    }));
    let counter_archive = if cfg.counter_frozen {
        counter.clone()
    } else {
        let mut a = counter.clone();
        a.manifest.parameter_checksum = best_counter.checksum();
        a.tensors = best_counter.named_tensors();
        a
    };
    Ok(DetectorTraining {
        outcome: TrainOutcome {
            archive: ParameterArchive::from_network(&det, training, dataset_fingerprint(train), metrics),
            network: det,
            log,
            best_epoch: best.epoch,
        },
        counter: counter_archive,
        val_threshold: best_threshold,
    })
}

/// Which half of the two-stage classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierStage {
    /// CD8 / pSTAT− / pSTAT+ (all expression levels merged).
    One,
    /// Strong / moderate / weak pSTAT+ expression.
    Two,
}

impl ClassifierStage {
    /// Output index for a category, or `None` when the stage does not see it.
    pub fn label(self, category: Category) -> Option<usize> {
        match (self, category) {
            (ClassifierStage::One, Category::Cd8) => Some(0),
            (ClassifierStage::One, Category::PstatNegative) => Some(1),
            (ClassifierStage::One, _) => Some(2),
            (ClassifierStage::Two, Category::PstatStrong) => Some(0),
            (ClassifierStage::Two, Category::PstatModerate) => Some(1),
            (ClassifierStage::Two, Category::PstatWeak) => Some(2),
            (ClassifierStage::Two, _) => None,
        }
    }

    pub fn class_names(self) -> [&'static str; 3] {
        match self {
            ClassifierStage::One => ["CD8", "GAL8+pSTAT−", "GAL8+pSTAT+"],
            ClassifierStage::Two => ["strong", "moderate", "weak"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassifierStage::One => "classifier1",
            ClassifierStage::Two => "classifier2",
        }
    }
}

/// Stage labels of single-cell patches; patches outside the stage are
/// skipped. Returns `(patch index, label)` pairs.
pub fn stage_labels(stage: ClassifierStage, patches: &[AnnotatedPatch]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, p) in patches.iter().enumerate() {
        let dot = p
            .dots
            .first()
            .ok_or_else(|| Error::InvalidInput(format!("cell patch {} has no annotation", p.id)))?;
        if let Some(l) = stage.label(dot.category) {
            out.push((i, l));
        }
    }
    Ok(out)
}

/// Class-balanced batches: every batch holds `batch / classes` items of
/// each class. Each class is cycled through in reshuffled order, so small
/// classes repeat within an epoch.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    pools: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    per_class: usize,
    steps: usize,
}

impl BalancedSampler {
    /// `labels[i]` is the class of item `i`.
    pub fn new(labels: &[usize], classes: usize, batch: usize, length: EpochLength) -> Result<Self> {
        if batch == 0 || batch % classes != 0 {
            return Err(Error::Config(format!(
                "balanced batches need a batch size divisible by {classes}, got {batch}"
            )));
        }
        let mut pools = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::InvalidInput(format!("label {l} outside {classes} classes")));
            }
            pools[l].push(i);
        }
        if let Some(c) = pools.iter().position(|p| p.is_empty()) {
            return Err(Error::EmptyCategory(format!("class {c}")));
        }
        let per_class = batch / classes;
        let sizes = pools.iter().map(|p| p.len());
        let visit = match length {
            EpochLength::LargestCategory => sizes.max(),
            EpochLength::SmallestCategory => sizes.min(),
        }
        .expect("at least one class");
        Ok(Self {
            cursors: vec![usize::MAX; classes],
            pools,
            per_class,
            steps: visit.div_ceil(per_class),
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.pools.iter().map(|p| p.len()).collect()
    }

    /// Item indices for the next batch, grouped by class.
    pub fn next_batch<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.per_class * self.pools.len());
        for (pool, cursor) in self.pools.iter_mut().zip(&mut self.cursors) {
            for _ in 0..self.per_class {
                if *cursor >= pool.len() {
                    pool.shuffle(rng);
                    *cursor = 0;
                }
                out.push(pool[*cursor]);
                *cursor += 1;
            }
        }
        out
    }
}

/// Class probabilities for single-cell patches, `[item][class]`.
pub fn classify(net: &Network, patches: &[&AnnotatedPatch], batch: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(batch.max(1)) {
        let probs = net.predict(patch_tensor(chunk))?;
        for s in 0..chunk.len() {
            out.push(probs.sample(s).iter().map(|&v| v as f64).collect());
        }
    }
    Ok(out)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

/// Trains one classifier stage on 28×28 single-cell patches with balanced
/// batches, flip and zoom augmentation and dropout. Early stopping tracks
/// validation accuracy on the unbalanced validation set.
pub fn train_classifier(
    stage: ClassifierStage,
    train: &[AnnotatedPatch],
    val: &[AnnotatedPatch],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = classifier_spec();
    let shape = spec.input_shape()?;
    for p in train.iter().chain(val) {
        if p.width() != shape.width || p.height() != shape.height || p.image.channels() != shape.channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", shape.width, shape.height, shape.channels),
                found: format!("{}x{}x{}", p.width(), p.height(), p.image.channels()),
            });
        }
    }
    let train_items = stage_labels(stage, train)?;
    let val_items = stage_labels(stage, val)?;
    if train_items.is_empty() {
        return Err(Error::EmptyDataset(format!("no training cells for {}", stage.name())));
    }
    if val_items.is_empty() {
        return Err(Error::EmptyDataset(format!("no validation cells for {}", stage.name())));
    }
    let names = stage.class_names();
    let train_labels: Vec<usize> = train_items.iter().map(|x| x.1).collect();
    let mut sampler = BalancedSampler::new(&train_labels, CLASSIFIER_CLASSES, cfg.batch_size, cfg.epoch_length)
        .map_err(|e| match e {
            Error::EmptyCategory(c) => {
                let idx: usize = c.trim_start_matches("class ").parse().unwrap_or(0);
                Error::EmptyCategory(names[idx].to_string())
            }
            other => other,
        })?;
    let val_refs: Vec<&AnnotatedPatch> = val_items.iter().map(|&(i, _)| &val[i]).collect();
    let val_labels: Vec<usize> = val_items.iter().map(|x| x.1).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::glorot(spec, &mut rng)?;
    let mut adam = Adam::new(cfg.learning_rate as f32);
    let mut log = TrainingLog::new(&["epoch", "train_loss", "val_loss", "val_accuracy"]);
    let mut best = BestTracker::new();

    let evaluate = |net: &Network| -> Result<(f64, f64)> {
        let probs = classify(net, &val_refs, 64)?;
        let flat: Vec<f64> = probs.iter().flatten().copied().collect();
        let (loss, _) = categorical_cross_entropy(&flat, &val_labels, CLASSIFIER_CLASSES)?;
        let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        Ok((loss, confusion_and_accuracy(&pred, &val_labels, CLASSIFIER_CLASSES)?.accuracy))
    };
    let (val_loss, val_acc) = evaluate(&net)?;
    log.push(vec![0.0, f64::NAN, val_loss, val_acc]);
    best.observe(0, val_acc, &net, cfg.patience);

    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for _ in 0..sampler.steps_per_epoch() {
            let items = sampler.next_batch(&mut rng);
            let augmented: Vec<AnnotatedPatch> = items
                .iter()
                .map(|&k| augment_patch(&train[train_items[k].0], &cfg.augment, &mut rng))
                .collect();
            let labels: Vec<usize> = items.iter().map(|&k| train_items[k].1).collect();
            let refs: Vec<&AnnotatedPatch> = augmented.iter().collect();
            let trace = net.forward(patch_tensor(&refs), Mode::Train, &mut rng)?;
            let probs: Vec<f64> = trace.output().data().iter().map(|&v| v as f64).collect();
            let (loss, grad) = categorical_cross_entropy(&probs, &labels, CLASSIFIER_CLASSES)?;
            if !loss.is_finite() {
                return Err(diverged(stage.name(), epoch, format!("cross-entropy {loss}")));
            }
            total += loss;
            let grad = Tensor::from_vec(trace.output().shape(), grad.iter().map(|&g| g as f32).collect());
            let mut grads = net.zero_gradients();
            net.backward(&trace, grad, Some(&mut grads), false)?;
            adam.update(net.param_slices_mut(), grads.slices());
        }
        let (val_loss, val_acc) = evaluate(&net)?;
        log.push(vec![epoch as f64, total / sampler.steps_per_epoch() as f64, val_loss, val_acc]);
        if best.observe(epoch, val_acc, &net, cfg.patience) {
            break;
        }
    }
    let net = best.params.take().expect("initial state recorded");
    let (val_loss, val_acc) = evaluate(&net)?;
    let metrics = BTreeMap::from([
        ("val_accuracy".to_string(), val_acc),
        ("val_loss".to_string(), val_loss),
        ("best_epoch".to_string(), best.epoch as f64),
        ("epochs_run".to_string(), (log.rows.len() - 1) as f64),
    ]);
    let training = cfg.snapshot(serde_json::json!({
        "procedure": "train_classifier",
        "stage": stage,
        "class_sizes": sampler.class_sizes(),
        "steps_per_epoch": sampler.steps_per_epoch(),
    }));
    Ok(TrainOutcome {
        archive: ParameterArchive::from_network(&net, training, dataset_fingerprint(train), metrics),
        network: net,
        log,
        best_epoch: best.epoch,
    })
}
