use std::path::PathBuf;

use thiserror::Error;

use crate::labelspace::Dims;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("invalid label-set mask {mask:#x} for {num_labels} labels")]
    InvalidLabelSet { mask: u64, num_labels: usize },

    #[error("label index {index} out of range for {num_labels} labels")]
    IndexOutOfRange { index: usize, num_labels: usize },

    #[error("volume has no voxels")]
    EmptyVolume,

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: Dims, right: Dims },

    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("negative probability {value} at voxel {voxel}, class {class}")]
    NegativeProbability { voxel: usize, class: usize, value: f64 },

    #[error("row sum deviates from 1 by {deviation} at voxel {voxel}")]
    RowSumViolation { voxel: usize, deviation: f64 },

    #[error("annotation is not a leaf partition (distinct label-sets overlap)")]
    NotLeafPartition,

    #[error("invalid loss spec: {0}")]
    InvalidLossSpec(String),

    #[error("finite-difference step {0} is below 1e-8")]
    StepTooSmall(f64),

    #[error("input outside the finite-difference domain: {0}")]
    OutOfDomain(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("unannotated label-set cannot be the full label space")]
    LPrimeIsFullSpace,

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("voxel {voxel} has bitmask {mask:#x} invalid for {channels} channels")]
    InvalidBitmask { voxel: usize, mask: u64, channels: usize },

    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),

    #[error("unknown volume kind {0}")]
    UnknownKind(u8),

    #[error("training needs at least 2 volumes, got {0}")]
    TooFewVolumes(usize),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
