//! Network architectures, their executor, training loops and checkpoints.

mod checkpoint;
mod network;
mod predict;
mod spec;
mod train;

pub use checkpoint::*;
pub use network::{Gradients, LayerParams, Mode, Network, Trace};
pub use predict::{
    predict_classifier_cascade, predict_detector, probability_maps, Cascade, CascadePrediction, Detector,
    DetectorPrediction,
};
pub use spec::*;
pub use train::{
    classify, patch_tensor, pretrain_counter, stage_labels, train_classifier, train_detector, BalancedSampler,
    ClassifierStage, DetectorTraining, EpochLength, TrainConfig, TrainOutcome,
};
pub(crate) use train::argmax;
