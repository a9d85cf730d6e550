use pcl_autodiff::AdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Ad(#[from] AdError),

    #[error("clip too short: {0} frame(s), motion needs at least 2")]
    ClipTooShort(usize),

    #[error("input extents {h}x{w} must be divisible by 32")]
    Indivisible { h: usize, w: usize },

    #[error("couple features are only accepted in PCLNetC mode")]
    CoupleInPlainMode,

    #[error("OFE block needs at least one of motion/previous features")]
    EmptyOfeInput,

    #[error("dilated stack: {dilations} dilations vs {channels} channel widths")]
    StackLenMismatch { dilations: usize, channels: usize },

    #[error("ssim window {window} exceeds image extent {h}x{w}")]
    WindowTooLarge { window: usize, h: usize, w: usize },

    #[error("{got} flow pyramids for {frames} frames, expected {expected}")]
    PyramidCount { frames: usize, got: usize, expected: usize },

    #[error("invalid config: {0}")]
    Config(String),
}
