use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch, {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: invalid argument, {detail}")]
    InvalidArg { op: &'static str, detail: String },

    #[error("backward requires a scalar loss of shape 1x1x1x1, got {0}")]
    NonScalarLoss(Shape),

    #[error("tensor data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength { shape: Shape, len: usize, expected: usize },

    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
}

impl AdError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        AdError::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn arg(op: &'static str, detail: impl Into<String>) -> Self {
        AdError::InvalidArg { op, detail: detail.into() }
    }
}
