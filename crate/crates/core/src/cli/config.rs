use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_MASK_RADIUS;
use crate::error::{Error, Result};
use crate::eval::{default_thresholds, MatchStrategy, DEFAULT_MATCH_RADIUS, DEFAULT_THRESHOLD};
use crate::models::TrainConfig;
use crate::synthgen::SynthConfig;

/// Dataset locations. Each path is a directory in the dataset layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Images for `predict`; annotations are not needed.
    pub images: Option<PathBuf>,
    /// Benchmark suite used by `generate` and `ablate`.
    pub suite: Option<String>,
    /// Side length of generated patches.
    pub patch_size: Option<usize>,
    /// Number of patches for `generate` without a suite.
    pub patches: usize,
    /// Pseudo-masks synthesized for counter pretraining in `ablate`.
    pub counter_masks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub radius: f64,
    /// Threshold used for reported matches and predictions.
    pub threshold: f64,
    /// Thresholds swept to find the best F1.
    pub thresholds: Vec<f64>,
    pub strategy: MatchStrategy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_MATCH_RADIUS,
            threshold: DEFAULT_THRESHOLD,
            thresholds: default_thresholds(),
            strategy: MatchStrategy::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub counter: TrainConfig,
    pub detector: TrainConfig,
    /// Missing keys fall back to the classifier defaults (batches of 30).
    #[serde(deserialize_with = "classifier_defaults")]
    pub classifier: TrainConfig,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn classifier_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    let given = serde_json::Value::deserialize(d)?;
    let mut base = serde_json::to_value(TrainConfig::classifier()).map_err(serde::de::Error::custom)?;
    merge(&mut base, given);
    serde_json::from_value(base).map_err(serde::de::Error::custom)
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            counter: TrainConfig::default(),
            detector: TrainConfig::default(),
            classifier: TrainConfig::classifier(),
        }
    }
}

/// Checkpoint directories produced by `train`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointConfig {
    pub counter: Option<PathBuf>,
    pub detector: Option<PathBuf>,
    pub classifier1: Option<PathBuf>,
    pub classifier2: Option<PathBuf>,
}

/// Everything a command needs. The top-level `seed` overrides the seeds of
/// the nested sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub mask_radius: f64,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub checkpoints: CheckpointConfig,
    pub predictions: Option<PathBuf>,
    pub roc: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/latest"),
            mask_radius: DEFAULT_MASK_RADIUS,
            data: DataConfig {
                patches: 16,
                counter_masks: 512,
                ..DataConfig::default()
            },
            synth: SynthConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
            checkpoints: CheckpointConfig::default(),
            predictions: None,
            roc: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Copies the top-level seed and mask radius into every section.
    pub fn propagate(&mut self) {
        self.synth.seed = self.seed;
        for t in [&mut self.train.counter, &mut self.train.detector, &mut self.train.classifier] {
            t.seed = self.seed;
            t.mask_radius = self.mask_radius;
            t.match_radius = self.eval.radius;
            t.thresholds = self.eval.thresholds.clone();
        }
    }

    /// Value ranges plus existence of every referenced input path.
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_radius > 0.0) {
            return Err(Error::Config("mask_radius must be positive".into()));
        }
        if !(self.eval.radius > 0.0) {
            return Err(Error::Config("eval.radius must be positive".into()));
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(Error::Config("eval.threshold must lie in (0, 1)".into()));
        }
        self.synth.validate()?;
        self.train.counter.validate()?;
        self.train.detector.validate()?;
        self.train.classifier.validate()?;
        let paths = [
            ("data.train", &self.data.train),
            ("data.val", &self.data.val),
            ("data.test", &self.data.test),
            ("data.images", &self.data.images),
            ("checkpoints.counter", &self.checkpoints.counter),
            ("checkpoints.detector", &self.checkpoints.detector),
            ("checkpoints.classifier1", &self.checkpoints.classifier1),
            ("checkpoints.classifier2", &self.checkpoints.classifier2),
            ("predictions", &self.predictions),
            ("roc", &self.roc),
        ];
        for (name, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_values() {
        let c = RunConfig::default();
        assert_eq!(c.mask_radius, 4.0);
        assert_eq!(c.train.detector.loss.k, 0.3);
        assert_eq!(c.eval.threshold, 0.85);
        assert_eq!(c.eval.radius, 8.0);
        assert_eq!(c.train.counter.learning_rate, 1e-4);
        assert_eq!(c.train.classifier.batch_size % 3, 0);
        assert_eq!(crate::models::CLASSIFIER_DROPOUT, 0.3);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = RunConfig::from_toml("seed = 5\n[train.detector.loss]\nk = 0.0\n").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.train.detector.loss.k, 0.0);
        assert_eq!(partial.train.detector.batch_size, 4);
        let partial = RunConfig::from_toml("[train.classifier]\nmax_epochs = 3\n").unwrap();
        assert_eq!(partial.train.classifier.batch_size, 30);
        assert_eq!(partial.train.classifier.max_epochs, 3);
    }

    #[test]
    fn unknown_keys_and_missing_paths_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.data.train = Some(PathBuf::from("/definitely/not/here"));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
