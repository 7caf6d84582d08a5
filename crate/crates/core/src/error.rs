use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    LengthMismatch { shape: Shape, len: usize, expected: usize },

    #[error("{op}: shape mismatch, {lhs} vs {rhs}")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar (1,1,1,1) tensor, got {0}")]
    NotScalar(Shape),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: expected an 8-bit RGB image, found {found}", path.display())]
    NotRgb { path: PathBuf, found: String },

    #[error("failed to decode {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to encode {}: {source}", path.display())]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("non-finite loss at step {step} (lr {lr:e}): {breakdown}")]
    NonFinite { step: usize, lr: f64, breakdown: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, not a checkpoint file")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),

    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}
