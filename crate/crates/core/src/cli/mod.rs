//! The `concorde` command line: dataset generation, pseudo-masks, training,
//! evaluation, prediction, overlays, the count-weight ablation and ROC
//! plots. Every verb writes a run manifest next to its outputs.

mod config;
mod manifest;
pub mod pipeline;
mod render;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, load_images, save_dataset, AnnotatedPatch, Category, CLASSIFIER_PATCH_SIZE, DETECTION_PATCH_SIZE};
use crate::error::{Error, Result};
use crate::eval::{extract_centroids, label_components, read_roc_csv, roc_to_csv, sweep_to_csv, write_json, write_text};
use crate::models::{
    dataset_fingerprint, pretrain_counter, train_classifier, train_detector, Cascade, ClassifierStage, Detector,
    ParameterArchive, TrainOutcome, METRICS_FILE,
};
use crate::synthgen::{benchmark_suite, generate, BenchmarkSuite, SuiteManifest, SynthConfig, SUITE_NAMES, SPLIT_SIZES};

pub use config::{CheckpointConfig, DataConfig, EvalConfig, RunConfig, TrainSection};
pub use manifest::{hash_path, InputHash, RunManifest, EFFECTIVE_CONFIG_FILE, RUN_MANIFEST_FILE};
pub use render::{category_rgb, overlay, plot_roc, UNCLASSIFIED_RGB};

/// Environment variable naming the dataset cache directory.
pub const CACHE_ENV: &str = "CONCORDE_CACHE";
const DEFAULT_CACHE: &str = ".concorde-cache";

pub const PREDICTIONS_SCHEMA: &str = "concorde.predictions";
pub const PREDICTIONS_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "concorde", version, about = "Count-regularized cell detection and two-stage cell classification")]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-patch work. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Counter,
    Detector,
    Classifier1,
    Classifier2,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Counter => "counter",
            NetworkKind::Detector => "detector",
            NetworkKind::Classifier1 => "classifier1",
            NetworkKind::Classifier2 => "classifier2",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic patches or benchmark suites in the dataset layout.
    Generate {
        /// Suite name (easy, touching, weak-stain, mixed) or `all`.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        patches: Option<usize>,
    },
    /// Write the pseudo-mask of every patch as a PNG plus a count table.
    BuildMasks {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one network and write its checkpoint directory.
    Train {
        network: NetworkKind,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        counter: Option<PathBuf>,
    },
    /// Detection and classification metrics on an annotated dataset.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        checkpoints: CheckpointArgs,
    },
    /// Cell centroids and categories for every image, as JSON.
    Predict {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        checkpoints: CheckpointArgs,
    },
    /// Draw predicted cells onto their images.
    Overlay {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Train detectors with and without the count term and compare them.
    Ablate {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Render ROC points from CSV to PNG.
    Plot {
        #[arg(long)]
        roc: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct CheckpointArgs {
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[arg(long)]
    pub counter: Option<PathBuf>,
    #[arg(long)]
    pub classifier1: Option<PathBuf>,
    #[arg(long)]
    pub classifier2: Option<PathBuf>,
}

impl CheckpointArgs {
    fn apply(&self, c: &mut CheckpointConfig) {
        for (flag, slot) in [
            (&self.detector, &mut c.detector),
            (&self.counter, &mut c.counter),
            (&self.classifier1, &mut c.classifier1),
            (&self.classifier2, &mut c.classifier2),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
    }
}

/// What a command did: its output directory and the files it wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: String,
    pub out: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub message: String,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    fn output(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        p
    }

    fn require<'a>(&mut self, what: &str, p: &'a Option<PathBuf>) -> Result<&'a PathBuf> {
        let p = p.as_ref().ok_or_else(|| Error::Config(format!("{what} is required for this command")))?;
        self.input(p);
        Ok(p)
    }

    fn dataset(&mut self, what: &str, p: &Option<PathBuf>) -> Result<Vec<AnnotatedPatch>> {
        let path = self.require(what, p)?.clone();
        let patches = load_dataset(&path)?;
        if patches.is_empty() {
            return Err(Error::EmptyDataset(format!("{what}: {} has no patches", path.display())));
        }
        Ok(patches)
    }

    fn archive(&mut self, what: &str, p: &Option<PathBuf>) -> Result<ParameterArchive> {
        let path = self.require(what, p)?.clone();
        if !path.join(crate::models::PARAMS_FILE).exists() {
            return Err(Error::Config(format!("{what}: no checkpoint in {}", path.display())));
        }
        ParameterArchive::load(&path)
    }
}

/// Dataset cache root: `$CONCORDE_CACHE` or `.concorde-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE))
}

/// Loads a suite from the cache, regenerating it when absent or stale.
pub fn cached_suite(name: &str, seed: u64, size: usize) -> Result<BenchmarkSuite> {
    let root = cache_dir().join("suites").join(format!("seed-{seed}")).join(format!("size-{size}"));
    let dir = root.join(name);
    if let Ok(text) = std::fs::read_to_string(dir.join("suite.json")) {
        if let Ok(manifest) = serde_json::from_str::<SuiteManifest>(&text) {
            let load = |split: &str| load_dataset(dir.join(split));
            if let (Ok(train), Ok(val), Ok(test)) = (load("train"), load("val"), load("test")) {
                let fresh = [("train", &train), ("val", &val), ("test", &test)]
                    .iter()
                    .all(|(s, p)| manifest.splits.get(*s).map(|m| m.fingerprint == dataset_fingerprint(p)) == Some(true));
                if fresh {
                    return Ok(BenchmarkSuite { name: name.into(), config: manifest.config, train, val, test });
                }
            }
        }
    }
    let suite = benchmark_suite(name, seed, size)?;
    suite.save(&root)?;
    Ok(suite)
}

fn save_outcome(ctx: &mut Ctx, dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    outcome.archive.save(dir)?;
    outcome.log.write_csv(dir.join(METRICS_FILE))?;
    ctx.output(dir.to_path_buf());
    Ok(())
}

fn patch_size(cfg: &RunConfig) -> usize {
    cfg.data.patch_size.unwrap_or(DETECTION_PATCH_SIZE)
}

fn cmd_generate(ctx: &mut Ctx, suite: Option<String>) -> Result<String> {
    let size = patch_size(&ctx.cfg);
    let suite = suite.or_else(|| ctx.cfg.data.suite.clone());
    match suite.as_deref() {
        Some(name) => {
            let names: Vec<&str> = if name == "all" { SUITE_NAMES.to_vec() } else { vec![name] };
            for n in &names {
                let s = benchmark_suite(n, ctx.cfg.seed, size)?;
                s.save(&ctx.out)?;
                ctx.output(ctx.out.join(n));
            }
            let per: usize = SPLIT_SIZES.iter().map(|s| s.1).sum();
            Ok(format!("wrote {} suite(s) of {per} patches at {size}px", names.len()))
        }
        None => {
            let synth = if ctx.cfg.data.patch_size.is_some() { ctx.cfg.synth.resized(size) } else { ctx.cfg.synth.clone() };
            let patches = generate(&synth, ctx.cfg.data.patches)?;
            let dir = ctx.output(ctx.out.join("dataset"));
            save_dataset(&patches, &dir)?;
            Ok(format!("wrote {} patches to {}", patches.len(), dir.display()))
        }
    }
}

fn cmd_build_masks(ctx: &mut Ctx) -> Result<String> {
    let patches = ctx.dataset("data.train", &ctx.cfg.data.train.clone())?;
    let masks = pipeline::pseudo_masks(&patches, ctx.cfg.mask_radius)?;
    let dir = ctx.output(ctx.out.join("masks"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut table = String::from("id,count,foreground,components\n");
    for (p, m) in patches.iter().zip(&masks) {
        let (w, h) = (m.mask.width() as u32, m.mask.height() as u32);
        let img = image::GrayImage::from_raw(w, h, m.mask.data().iter().map(|&v| v * 255).collect())
            .expect("mask dimensions");
        let path = dir.join(format!("{}.png", p.id));
        img.save(&path).map_err(|e| Error::image(&path, e))?;
        let on: Vec<bool> = m.mask.data().iter().map(|&v| v == 1).collect();
        let comps = label_components(&on, w as usize, h as usize).1;
        table.push_str(&format!("{},{},{},{}\n", p.id, m.count, m.mask.foreground(), comps));
    }
    write_text(&dir.join("counts.csv"), &table)?;
    Ok(format!("wrote {} masks to {}", masks.len(), dir.display()))
}

fn cmd_train(ctx: &mut Ctx, network: NetworkKind) -> Result<String> {
    let cfg = ctx.cfg.clone();
    let dir = ctx.out.join(network.name());
    match network {
        NetworkKind::Counter => {
            let (train, val) = match &cfg.data.train {
                Some(_) => {
                    let train = ctx.dataset("data.train", &cfg.data.train)?;
                    let val = ctx.dataset("data.val", &cfg.data.val)?;
                    (
                        pipeline::pseudo_masks(&train, cfg.mask_radius)?,
                        pipeline::pseudo_masks(&val, cfg.mask_radius)?,
                    )
                }
                None => {
                    let synth = match cfg.data.patch_size {
                        Some(s) => cfg.synth.resized(s),
                        None => cfg.synth.clone(),
                    };
                    let n = cfg.data.counter_masks.max(2);
                    let val_cfg = SynthConfig { seed: synth.seed.wrapping_add(1), ..synth.clone() };
                    (
                        pipeline::synthetic_masks(&synth, n, cfg.mask_radius)?,
                        pipeline::synthetic_masks(&val_cfg, (n / 4).max(2), cfg.mask_radius)?,
                    )
                }
            };
            let out = pretrain_counter(&train, &val, &cfg.train.counter)?;
            save_outcome(ctx, &dir, &out)?;
            Ok(format!("val pearson {:.4}", out.archive.manifest.metrics["val_pearson"]))
        }
        NetworkKind::Detector => {
            let train = ctx.dataset("data.train", &cfg.data.train)?;
            let val = ctx.dataset("data.val", &cfg.data.val)?;
            let counter = ctx.archive("checkpoints.counter", &cfg.checkpoints.counter)?;
            let run = train_detector(&train, &val, &counter, &cfg.train.detector)?;
            save_outcome(ctx, &dir, &run.outcome)?;
            if !cfg.train.detector.counter_frozen {
                run.counter.save(dir.join("counter"))?;
            }
            Ok(format!(
                "val F1 {:.4} at T={:.2}",
                run.outcome.archive.manifest.metrics["val_f1"], run.val_threshold
            ))
        }
        NetworkKind::Classifier1 | NetworkKind::Classifier2 => {
            let stage = if network == NetworkKind::Classifier1 { ClassifierStage::One } else { ClassifierStage::Two };
            let train = pipeline::cells_of(&ctx.dataset("data.train", &cfg.data.train)?);
            let val = pipeline::cells_of(&ctx.dataset("data.val", &cfg.data.val)?);
            let out = train_classifier(stage, &train, &val, &cfg.train.classifier)?;
            save_outcome(ctx, &dir, &out)?;
            Ok(format!("val accuracy {:.4}", out.archive.manifest.metrics["val_accuracy"]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub detection: Option<pipeline::DetectionSummary>,
    pub cascade: Option<pipeline::CascadeEvaluation>,
}

fn cmd_evaluate(ctx: &mut Ctx) -> Result<String> {
    let cfg = ctx.cfg.clone();
    let patches = ctx.dataset("data.test", &cfg.data.test)?;
    let mut report = EvaluationReport { detection: None, cascade: None };
    let mut lines = Vec::new();
    if cfg.checkpoints.detector.is_some() {
        let det = ctx.archive("checkpoints.detector", &cfg.checkpoints.detector)?;
        let counter = ctx.archive("checkpoints.counter", &cfg.checkpoints.counter)?;
        let detector = Detector::from_archives(&det, &counter)?;
        let ev = pipeline::evaluate_detector(&detector, &patches, &cfg.eval)?;
        let sweep = ctx.output(ctx.out.join("sweep.csv"));
        write_text(&sweep, &sweep_to_csv(&ev.sweep))?;
        let matches = ctx.output(ctx.out.join("matches.json"));
        write_json(&matches, &ev.matches)?;
        lines.push(format!("detection F1 {:.4} at T={:.2} (best {:.4} at T={:.2})", ev.summary.f1, ev.summary.threshold, ev.summary.best_f1, ev.summary.best_threshold));
        report.detection = Some(ev.summary);
    }
    if cfg.checkpoints.classifier1.is_some() || cfg.checkpoints.classifier2.is_some() {
        let s1 = ctx.archive("checkpoints.classifier1", &cfg.checkpoints.classifier1)?;
        let s2 = ctx.archive("checkpoints.classifier2", &cfg.checkpoints.classifier2)?;
        let cells = pipeline::cells_of(&patches);
        let ev = pipeline::evaluate_cascade(&s1, &s2, &cells)?;
        let p = ctx.output(ctx.out.join("roc_classifier1.csv"));
        write_text(&p, &roc_to_csv(&ev.stage1.named_curves()))?;
        if let Some(s2) = &ev.stage2 {
            let p = ctx.output(ctx.out.join("roc_classifier2.csv"));
            write_text(&p, &roc_to_csv(&s2.named_curves()))?;
        }
        lines.push(format!("cascade accuracy {:.4} over {} cells", ev.cascade.accuracy, ev.cells));
        report.cascade = Some(ev);
    }
    if report.detection.is_none() && report.cascade.is_none() {
        return Err(Error::Config("evaluate needs checkpoints.detector or the classifier checkpoints".into()));
    }
    let metrics = ctx.output(ctx.out.join("metrics.json"));
    write_json(&metrics, &report)?;
    Ok(lines.join("; "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedCell {
    pub x: f64,
    pub y: f64,
    pub category: Option<Category>,
    pub stage1: Option<Vec<f64>>,
    pub stage2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPrediction {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub predicted_count: f64,
    pub cells: Vec<PredictedCell>,
}

/// Versioned prediction file written by `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub schema: String,
    pub version: u32,
    pub threshold: f64,
    pub patches: Vec<PatchPrediction>,
}

impl PredictionFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PredictionFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.schema != PREDICTIONS_SCHEMA || file.version != PREDICTIONS_VERSION {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported prediction schema {} v{}",
                path.display(),
                file.schema,
                file.version
            )));
        }
        Ok(file)
    }
}

fn cmd_predict(ctx: &mut Ctx, images: Option<PathBuf>) -> Result<String> {
    use rayon::prelude::*;
    let cfg = ctx.cfg.clone();
    let images = images.or(cfg.data.images.clone()).or(cfg.data.test.clone());
    let dir = ctx.require("data.images", &images)?.clone();
    let images = load_images(&dir)?;
    let det = ctx.archive("checkpoints.detector", &cfg.checkpoints.detector)?;
    let counter = ctx.archive("checkpoints.counter", &cfg.checkpoints.counter)?;
    let detector = Detector::from_archives(&det, &counter)?;
    let cascade = match (&cfg.checkpoints.classifier1, &cfg.checkpoints.classifier2) {
        (None, None) => None,
        _ => {
            let s1 = ctx.archive("checkpoints.classifier1", &cfg.checkpoints.classifier1)?;
            let s2 = ctx.archive("checkpoints.classifier2", &cfg.checkpoints.classifier2)?;
            Some(Cascade::from_archives(&s1, &s2)?)
        }
    };
    let threshold = cfg.eval.threshold;
    let patches = images
        .par_iter()
        .map(|(id, image)| -> Result<PatchPrediction> {
            let pred = detector.predict(id, image)?;
            let cells = extract_centroids(&pred.map, threshold)
                .into_iter()
                .map(|c| -> Result<PredictedCell> {
                    let (category, stage1, stage2) = match &cascade {
                        Some(cascade) => {
                            let crop = crate::data::crop_centered(image, c.x as i64, c.y as i64, CLASSIFIER_PATCH_SIZE);
                            let p = cascade.predict(&crop)?;
                            (Some(p.category), Some(p.stage1), p.stage2)
                        }
                        None => (None, None, None),
                    };
                    Ok(PredictedCell { x: c.x, y: c.y, category, stage1, stage2 })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PatchPrediction {
                id: id.clone(),
                width: image.width(),
                height: image.height(),
                predicted_count: pred.count,
                cells,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let file = PredictionFile {
        schema: PREDICTIONS_SCHEMA.into(),
        version: PREDICTIONS_VERSION,
        threshold,
        patches,
    };
    let path = ctx.output(ctx.out.join("predictions.json"));
    write_json(&path, &file)?;
    let n: usize = file.patches.iter().map(|p| p.cells.len()).sum();
    Ok(format!("{n} cells in {} images", file.patches.len()))
}

fn cmd_overlay(ctx: &mut Ctx, predictions: Option<PathBuf>, images: Option<PathBuf>) -> Result<String> {
    let cfg = ctx.cfg.clone();
    let pred_path = predictions.or(cfg.predictions.clone());
    let pred_path = ctx.require("predictions", &pred_path)?.clone();
    let file = PredictionFile::load(&pred_path)?;
    let images = images.or(cfg.data.images.clone()).or(cfg.data.test.clone());
    let dir = ctx.require("data.images", &images)?.clone();
    let images = load_images(&dir)?;
    let out_dir = ctx.output(ctx.out.join("overlays"));
    let mut drawn = 0;
    for p in &file.patches {
        let Some((_, image)) = images.iter().find(|(id, _)| *id == p.id) else {
            return Err(Error::InvalidInput(format!("no image for prediction `{}`", p.id)));
        };
        let dots: Vec<(f64, f64, [u8; 3])> = p
            .cells
            .iter()
            .map(|c| (c.x, c.y, c.category.map(category_rgb).unwrap_or(UNCLASSIFIED_RGB)))
            .collect();
        render::save_png(&overlay(image, &dots), &out_dir.join(format!("{}.png", p.id)))?;
        drawn += 1;
    }
    Ok(format!("wrote {drawn} overlays to {}", out_dir.display()))
}

fn cmd_ablate(ctx: &mut Ctx, suite: Option<String>) -> Result<String> {
    let cfg = ctx.cfg.clone();
    let size = patch_size(&cfg);
    let (train, val, test, synth) = match (&cfg.data.train, &cfg.data.val, &cfg.data.test) {
        (Some(_), Some(_), Some(_)) => {
            let synth = cfg.synth.resized(size);
            (
                ctx.dataset("data.train", &cfg.data.train)?,
                ctx.dataset("data.val", &cfg.data.val)?,
                ctx.dataset("data.test", &cfg.data.test)?,
                synth,
            )
        }
        _ => {
            let name = suite.or(cfg.data.suite.clone()).unwrap_or_else(|| "touching".into());
            let s = cached_suite(&name, cfg.seed, size)?;
            (s.train, s.val, s.test, s.config)
        }
    };
    let counter = match &cfg.checkpoints.counter {
        Some(_) => ctx.archive("checkpoints.counter", &cfg.checkpoints.counter)?,
        None => {
            let mask_cfg = SynthConfig {
                seed: cfg.seed.wrapping_add(500),
                cells_per_patch: (0, synth.cells_per_patch.1 * 2),
                ..synth.clone()
            };
            let n = cfg.data.counter_masks.max(2);
            let train_masks = pipeline::synthetic_masks(&mask_cfg, n, cfg.mask_radius)?;
            let val_cfg = SynthConfig { seed: mask_cfg.seed.wrapping_add(1), ..mask_cfg };
            let val_masks = pipeline::synthetic_masks(&val_cfg, (n / 4).max(2), cfg.mask_radius)?;
            let out = pretrain_counter(&train_masks, &val_masks, &cfg.train.counter)?;
            save_outcome(ctx, &ctx.out.join("ablation").join("counter"), &out)?;
            out.archive
        }
    };
    let k = cfg.train.detector.loss.k;
    let weights: Vec<f64> = if k == 0.0 { vec![0.0] } else { vec![k, 0.0] };
    let (report, runs) = pipeline::run_ablation(&train, &val, &test, &counter, &cfg.train.detector, &weights, &cfg.eval)?;
    for (w, run) in weights.iter().zip(&runs) {
        save_outcome(ctx, &ctx.out.join("ablation").join(format!("k{w}")), &run.outcome)?;
    }
    let json = ctx.output(ctx.out.join("ablation.json"));
    write_json(&json, &report)?;
    let csv = ctx.output(ctx.out.join("ablation.csv"));
    write_text(&csv, &report.to_csv())?;
    Ok(report
        .rows
        .iter()
        .map(|r| format!("K={}: P {:.3} R {:.3} F1 {:.3} at T={:.2}", r.k, r.precision, r.recall, r.f1, r.threshold))
        .collect::<Vec<_>>()
        .join("; "))
}

fn cmd_plot(ctx: &mut Ctx, roc: Option<PathBuf>) -> Result<String> {
    let roc = roc.or(ctx.cfg.roc.clone());
    let path = ctx.require("roc", &roc)?.clone();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let curves = read_roc_csv(&text)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("roc");
    let out = ctx.output(ctx.out.join(format!("{stem}.png")));
    render::save_png(&plot_roc(&curves, 480), &out)?;
    Ok(curves.iter().map(|(n, c)| format!("{n}: AUC {:.4}", c.auc)).collect::<Vec<_>>().join("; "))
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Generate { .. } => "generate".into(),
        Command::BuildMasks { .. } => "build-masks".into(),
        Command::Train { network, .. } => format!("train {}", network.name()),
        Command::Evaluate { .. } => "evaluate".into(),
        Command::Predict { .. } => "predict".into(),
        Command::Overlay { .. } => "overlay".into(),
        Command::Ablate { .. } => "ablate".into(),
        Command::Plot { .. } => "plot".into(),
    }
}

/// Builds the effective configuration: file, then command-line overrides.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out.clone_from(o);
    }
    match &cli.command {
        Command::Generate { size, patches, .. } => {
            if size.is_some() {
                cfg.data.patch_size = *size;
            }
            if let Some(n) = patches {
                cfg.data.patches = *n;
            }
        }
        Command::Ablate { size: Some(s), .. } => cfg.data.patch_size = Some(*s),
        Command::BuildMasks { data: Some(d) } => cfg.data.train = Some(d.clone()),
        Command::Train { train, val, counter, .. } => {
            if train.is_some() {
                cfg.data.train.clone_from(train);
            }
            if val.is_some() {
                cfg.data.val.clone_from(val);
            }
            if counter.is_some() {
                cfg.checkpoints.counter.clone_from(counter);
            }
        }
        Command::Evaluate { data, checkpoints } => {
            if data.is_some() {
                cfg.data.test.clone_from(data);
            }
            checkpoints.apply(&mut cfg.checkpoints);
        }
        Command::Predict { images, threshold, checkpoints } => {
            if images.is_some() {
                cfg.data.images.clone_from(images);
            }
            if let Some(t) = threshold {
                cfg.eval.threshold = *t;
            }
            checkpoints.apply(&mut cfg.checkpoints);
        }
        Command::Overlay { predictions, images } => {
            if predictions.is_some() {
                cfg.predictions.clone_from(predictions);
            }
            if images.is_some() {
                cfg.data.images.clone_from(images);
            }
        }
        Command::Plot { roc } if roc.is_some() => cfg.roc.clone_from(roc),
        _ => {}
    }
    cfg.propagate();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments and runs one command.
pub fn run<I, T>(args: I) -> Result<RunSummary>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    run_cli(cli)
}

pub fn run_cli(cli: Cli) -> Result<RunSummary> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let cfg = effective_config(&cli)?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut ctx = Ctx { cfg, out, inputs: Vec::new(), outputs: Vec::new() };
    if let Some(p) = &cli.config {
        ctx.input(p);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let message = pool.install(|| match &cli.command {
        Command::Generate { suite, .. } => cmd_generate(&mut ctx, suite.clone()),
        Command::BuildMasks { .. } => cmd_build_masks(&mut ctx),
        Command::Train { network, .. } => cmd_train(&mut ctx, *network),
        Command::Evaluate { .. } => cmd_evaluate(&mut ctx),
        Command::Predict { images, .. } => cmd_predict(&mut ctx, images.clone()),
        Command::Overlay { predictions, images } => cmd_overlay(&mut ctx, predictions.clone(), images.clone()),
        Command::Ablate { suite, .. } => cmd_ablate(&mut ctx, suite.clone()),
        Command::Plot { roc } => cmd_plot(&mut ctx, roc.clone()),
    })?;
    let command = command_name(&cli.command);
    let manifest = RunManifest {
        command: command.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: ctx.cfg.seed,
        jobs: cli.jobs,
        config: ctx.cfg.clone(),
        inputs: ctx.inputs.iter().map(|p| hash_path(p)).collect::<Result<Vec<_>>>()?,
        outputs: ctx.outputs.clone(),
    };
    manifest::write_manifest(&ctx.out, &manifest)?;
    Ok(RunSummary { command, out: ctx.out, outputs: ctx.outputs, message })
}

/// Process entry point: prints a summary line, or a one-line JSON error on
/// stderr, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return 2;
        }
    };
    match run_cli(cli) {
        Ok(summary) => {
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{}: {}", summary.command, summary.message);
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

/// `{"kind": ..., "message": ...}` on one line.
pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "kind": kind, "message": message }).to_string()
}
