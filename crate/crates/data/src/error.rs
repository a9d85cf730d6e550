use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: bad .flo magic {got} (expected 202021.25)")]
    BadFloMagic { path: PathBuf, got: f32 },

    #[error("{path}: dimensions {w}x{h} out of range")]
    BadDims { path: PathBuf, w: i32, h: i32 },

    #[error("{path}: truncated payload, expected {expected} bytes, got {got}")]
    Truncated { path: PathBuf, expected: usize, got: usize },

    #[error("{path}: {detail}")]
    BadHeader { path: PathBuf, detail: String },

    #[error("flow tensor must be 1x2xHxW, got {0}")]
    BadFlowShape(String),

    #[error("frame tensor must be 1x3xHxW, got {0}")]
    BadFrameShape(String),

    #[error("clip needs at least 2 frames, got {0}")]
    ClipTooShort(usize),

    #[error("clip has {frames} frames but {flows} ground-truth flows (expected {})", frames - 1)]
    FlowCount { frames: usize, flows: usize },

    #[error("frames disagree in shape: {0} vs {1}")]
    FrameShapeMismatch(String, String),

    #[error("motion magnitude {mag:.2} px exceeds extent/4 = {limit:.2} px")]
    MotionTooLarge { mag: f64, limit: f64 },

    #[error("per-step affine map is singular (|det| = {det:.3e})")]
    DegenerateMotion { det: f64 },

    #[error("extents {h}x{w} must be divisible by 32")]
    Indivisible { h: usize, w: usize },

    #[error("crop {ch}x{cw} larger than frame {h}x{w}")]
    CropTooLarge { ch: usize, cw: usize, h: usize, w: usize },

    #[error("random scaling requires a crop target to restore divisible extents")]
    ScaleNeedsCrop,

    #[error("missing ground-truth flow for {0}")]
    MissingFlow(PathBuf),

    #[error("no clips found under {0}")]
    EmptyDataset(PathBuf),

    #[error("{path}: unsupported PCLF version {got}")]
    BadVersion { path: PathBuf, got: u8 },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }
}
