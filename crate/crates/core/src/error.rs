use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dot {index} at ({x}, {y}) lies outside the {width}x{height} patch{}", patch.as_deref().map(|p| format!(" `{p}`")).unwrap_or_default())]
    DotOutOfBounds {
        patch: Option<String>,
        index: usize,
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("target contains a non-binary value {value} at index {index}")]
    NotBinary { index: usize, value: f64 },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("input size {size} is not divisible by {divisor}")]
    IndivisibleInput { size: usize, divisor: usize },

    #[error("unsupported layer configuration in `{layer}`: {detail}")]
    UnsupportedLayer { layer: String, detail: String },

    #[error("annotation file missing for image `{id}`")]
    MissingAnnotation { id: String },

    #[error("malformed annotation for `{id}`: {detail}")]
    MalformedAnnotation { id: String, detail: String },

    #[error("image `{id}` is {image_w}x{image_h} but its annotation says {ann_w}x{ann_h}")]
    DimensionMismatch {
        id: String,
        image_w: usize,
        image_h: usize,
        ann_w: usize,
        ann_h: usize,
    },

    #[error("architecture fingerprint mismatch: archive has {found}, network expects {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("{stage} training diverged at epoch {epoch}: {detail}")]
    Diverged {
        stage: String,
        epoch: usize,
        detail: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("category `{0}` has no examples")]
    EmptyCategory(String),

    #[error("could not place {requested} cells in a {size}x{size} patch after {attempts} attempts")]
    InfeasiblePacking {
        requested: usize,
        size: usize,
        attempts: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter archive: {0}")]
    Archive(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DotOutOfBounds { .. } => "dot_out_of_bounds",
            Error::InvalidInput(_) => "invalid_input",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NotBinary { .. } => "not_binary",
            Error::ZeroVariance(_) => "zero_variance",
            Error::IndivisibleInput { .. } => "indivisible_input",
            Error::UnsupportedLayer { .. } => "unsupported_layer",
            Error::MissingAnnotation { .. } => "missing_annotation",
            Error::MalformedAnnotation { .. } => "malformed_annotation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::Diverged { .. } => "diverged",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::EmptyCategory(_) => "empty_category",
            Error::InfeasiblePacking { .. } => "infeasible_packing",
            Error::Config(_) => "config",
            Error::Archive(_) => "archive",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
