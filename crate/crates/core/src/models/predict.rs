use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotatedPatch, Category, Image};
use crate::error::{Error, Result};
use crate::eval::ProbabilityMap;
use crate::nn::Tensor;

use super::checkpoint::ParameterArchive;
use super::network::Network;
use super::spec::{classifier_spec, counter_spec, Shape};
use super::train::argmax;

fn image_tensor(image: &Image, expected: Shape) -> Result<Tensor> {
    if image.width() != expected.width || image.height() != expected.height || image.channels() != expected.channels {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}x{}", expected.width, expected.height, expected.channels),
            found: format!("{}x{}x{}", image.width(), image.height(), image.channels()),
        });
    }
    Ok(Tensor::from_vec(
        [1, expected.channels, expected.height, expected.width],
        image.to_planar(),
    ))
}

/// Detector with the counter attached to its probability map.
#[derive(Debug, Clone)]
pub struct Detector {
    detector: Network,
    counter: Network,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorPrediction {
    pub map: ProbabilityMap,
    /// Counter output on the map, not rounded.
    pub count: f64,
}

impl Detector {
    pub fn new(detector: Network, counter: Network) -> Result<Self> {
        let out = detector.output_shape();
        let cin = counter.input_shape();
        if out != cin {
            return Err(Error::ShapeMismatch {
                expected: format!("counter input {}x{}x{}", out.channels, out.height, out.width),
                found: format!("{}x{}x{}", cin.channels, cin.height, cin.width),
            });
        }
        Ok(Self { detector, counter })
    }

    /// Rebuilds both networks; the counter must match the counter
    /// architecture for the detector's patch size.
    pub fn from_archives(detector: &ParameterArchive, counter: &ParameterArchive) -> Result<Self> {
        let det = detector.network()?;
        let size = det.input_shape().width;
        let counter = counter.to_network(&counter_spec(size)?)?;
        Self::new(det, counter)
    }

    pub fn patch_size(&self) -> usize {
        self.detector.input_shape().width
    }

    pub fn detector(&self) -> &Network {
        &self.detector
    }

    pub fn counter(&self) -> &Network {
        &self.counter
    }

    pub fn predict(&self, id: &str, image: &Image) -> Result<DetectorPrediction> {
        let p = self.detector.predict(image_tensor(image, self.detector.input_shape())?)?;
        let count = self.counter.predict(p.clone())?.data()[0] as f64;
        let shape = self.detector.output_shape();
        let values = p.into_vec().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(DetectorPrediction {
            map: ProbabilityMap::new(id, shape.width, shape.height, values)?,
            count,
        })
    }
}

/// Runs the detector on every patch; parallel across patches, output in
/// input order.
pub fn predict_detector(detector: &Detector, patches: &[AnnotatedPatch]) -> Result<Vec<DetectorPrediction>> {
    patches
        .par_iter()
        .map(|p| detector.predict(&p.id, &p.image))
        .collect()
}

pub fn probability_maps(detector: &Detector, patches: &[AnnotatedPatch]) -> Result<Vec<ProbabilityMap>> {
    Ok(predict_detector(detector, patches)?.into_iter().map(|p| p.map).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePrediction {
    pub category: Category,
    pub stage1: Vec<f64>,
    /// Present only when stage 1 chose pSTAT+.
    pub stage2: Option<Vec<f64>>,
}

/// Two-stage classifier: stage 1 separates CD8, pSTAT− and pSTAT+; pSTAT+
/// cells go on to stage 2 for their expression level.
#[derive(Debug, Clone)]
pub struct Cascade {
    stage1: Network,
    stage2: Network,
}

impl Cascade {
    pub fn new(stage1: Network, stage2: Network) -> Result<Self> {
        let spec = classifier_spec();
        for net in [&stage1, &stage2] {
            if net.spec().fingerprint() != spec.fingerprint() {
                return Err(Error::FingerprintMismatch {
                    expected: spec.fingerprint(),
                    found: net.spec().fingerprint(),
                });
            }
        }
        Ok(Self { stage1, stage2 })
    }

    pub fn from_archives(stage1: &ParameterArchive, stage2: &ParameterArchive) -> Result<Self> {
        let spec = classifier_spec();
        Self::new(stage1.to_network(&spec)?, stage2.to_network(&spec)?)
    }

    /// Final category from stage-1 probabilities; `stage2` is only called
    /// for pSTAT+ cells.
    pub fn route(
        stage1: Vec<f64>,
        stage2: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<CascadePrediction> {
        let (category, stage2) = match argmax(&stage1) {
            0 => (Category::Cd8, None),
            1 => (Category::PstatNegative, None),
            _ => {
                let p2 = stage2()?;
                let level = match argmax(&p2) {
                    0 => Category::PstatStrong,
                    1 => Category::PstatModerate,
                    _ => Category::PstatWeak,
                };
                (level, Some(p2))
            }
        };
        Ok(CascadePrediction { category, stage1, stage2 })
    }

    pub fn predict(&self, image: &Image) -> Result<CascadePrediction> {
        let input = image_tensor(image, self.stage1.input_shape())?;
        let p1 = self.stage1.predict(input.clone())?;
        let p1 = p1.data().iter().map(|&v| v as f64).collect();
        Self::route(p1, || {
            Ok(self.stage2.predict(input)?.data().iter().map(|&v| v as f64).collect())
        })
    }
}

/// Cascade labels for 28×28 single-cell patches, in input order.
pub fn predict_classifier_cascade(cascade: &Cascade, patches: &[AnnotatedPatch]) -> Result<Vec<CascadePrediction>> {
    patches.par_iter().map(|p| cascade.predict(&p.image)).collect()
}
