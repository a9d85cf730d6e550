//! Four-stage residual feature pyramid at strides 4/8/16/32.

use pcl_autodiff::{Scalar, Var};

use crate::config::ModelConfig;
use crate::error::NetError;
use crate::model::Fwd;

/// Per-frame feature maps, index 0..4 at strides 4, 8, 16, 32.
pub type PyramidFeatures = [Var; 4];

/// Extract the feature pyramid of one frame batch (N x 3 x H x W in [0, 1]).
///
/// Frames are standardized to mean 0.5 / std 0.5 per channel, pass a stride-2
/// stem, then four residual stages, each entered by a stride-2 convolution
/// with a 1x1 projection skip.
pub fn extract_pyramid<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    frames: Var,
) -> Result<PyramidFeatures, NetError> {
    let s = fwd.tape.shape(frames);
    if s.h % 32 != 0 || s.w % 32 != 0 {
        return Err(NetError::Indivisible { h: s.h, w: s.w });
    }
    let centered = fwd.tape.add_scalar(frames, -0.5);
    let x = fwd.tape.scale(centered, 2.0);

    let stem = fwd.conv("backbone.stem", x, 2, 1, 1)?;
    let mut cur = fwd.leaky(stem);

    let mut levels = Vec::with_capacity(cfg.channels.len());
    for stage in 1..=cfg.channels.len() {
        cur = residual_stage(fwd, &format!("backbone.stage{stage}"), cur)?;
        levels.push(cur);
    }
    Ok([levels[0], levels[1], levels[2], levels[3]])
}

fn residual_stage<T: Scalar>(fwd: &mut Fwd<T>, prefix: &str, x: Var) -> Result<Var, NetError> {
    let a = fwd.conv(&format!("{prefix}.conv1"), x, 2, 1, 1)?;
    let a = fwd.leaky(a);
    let b = fwd.conv(&format!("{prefix}.conv2"), a, 1, 1, 1)?;
    let skip = fwd.conv(&format!("{prefix}.proj"), x, 2, 0, 1)?;
    let sum = fwd.tape.add(b, skip)?;
    Ok(fwd.leaky(sum))
}

/// One pyramid per frame; parameters are shared across time.
pub fn extract_clip_pyramids<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    frames: &[Var],
) -> Result<Vec<PyramidFeatures>, NetError> {
    if frames.is_empty() {
        return Err(NetError::ClipTooShort(0));
    }
    frames.iter().map(|&f| extract_pyramid(fwd, cfg, f)).collect()
}
