use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: expected {expected} input channels, found {found}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("kernel size must be odd and positive, got {0}")]
    InvalidKernel(usize),

    #[error("dilation must be positive")]
    InvalidDilation,

    #[error("{op}: spatial dims {h}x{w} are not divisible by pool size {m}")]
    NotDivisible {
        op: &'static str,
        h: usize,
        w: usize,
        m: usize,
    },

    #[error("filter count must be even and positive, got {0}")]
    OddFilters(usize),

    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(f64),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("loss must be a scalar, got shape {0}")]
    NonScalarLoss(Shape),

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("invalid fold request: {0}")]
    InvalidFolds(String),

    #[error("fold contains no training images")]
    EmptyFold,

    #[error("parameter count must be positive, got {0}M")]
    NonPositiveParams(f64),

    #[error("image must have non-zero dimensions")]
    EmptyImage,

    #[error("invalid synthetic dataset request: {0}")]
    InvalidSynth(String),

    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("malformed report entry: {0}")]
    MalformedEntry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
