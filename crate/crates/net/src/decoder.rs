//! Coarse-to-fine flow decoding: five stacked OFE blocks and the dilated
//! context block.

use pcl_autodiff::{Scalar, Var};

use crate::blocks::dilated_conv_stack;
use crate::config::{ModelConfig, Variant};
use crate::error::NetError;
use crate::model::Fwd;
use crate::motion::MotionFeature;

/// Decoded flows of one frame transition: five predicted scales at strides
/// 32, 16, 8, 4, 2 (the stride-2 entry is context-refined), plus the stride-2
/// field upsampled to full resolution with values doubled.
#[derive(Debug, Clone)]
pub struct FlowPyramidVars {
    pub scales: [Var; 5],
    pub full: Var,
}

impl FlowPyramidVars {
    pub const STRIDES: [usize; 5] = [32, 16, 8, 4, 2];
}

/// Inputs of one OFE block. `prev_*` arrive already 2x-upsampled by the
/// caller (flow values doubled); `couple` is only legal in PCLNetC mode.
#[derive(Default)]
pub struct OfeInputs {
    pub motion: Option<Var>,
    pub prev_feat: Option<Var>,
    pub prev_flow: Option<Var>,
    pub couple: Option<Var>,
}

/// One Optical Flow Estimation block: concatenates the present inputs, runs
/// three leaky 3x3 convolutions, and predicts a residual 2-channel flow added
/// to the (upsampled) previous flow.
pub fn ofe_block<T: Scalar>(
    fwd: &mut Fwd<T>,
    prefix: &str,
    inputs: OfeInputs,
    variant: Variant,
) -> Result<(Var, Var), NetError> {
    if inputs.couple.is_some() && variant == Variant::PclNet {
        return Err(NetError::CoupleInPlainMode);
    }
    let mut cat: Vec<Var> = Vec::with_capacity(4);
    if let Some(m) = inputs.motion {
        cat.push(m);
    }
    if let Some(c) = inputs.couple {
        cat.push(c);
    }
    if let Some(f) = inputs.prev_feat {
        cat.push(f);
    }
    if let Some(f) = inputs.prev_flow {
        cat.push(f);
    }
    if cat.is_empty() || (inputs.motion.is_none() && inputs.prev_feat.is_none()) {
        return Err(NetError::EmptyOfeInput);
    }
    let mut feat = fwd.tape.concat_channels(&cat)?;
    for j in 1..=3 {
        feat = fwd.conv(&format!("{prefix}.conv{j}"), feat, 1, 1, 1)?;
        feat = fwd.leaky(feat);
    }
    let residual = fwd.conv(&format!("{prefix}.pred"), feat, 1, 1, 1)?;
    let flow = match inputs.prev_flow {
        Some(prev) => fwd.tape.add(prev, residual)?,
        None => residual,
    };
    Ok((feat, flow))
}

/// Context block: 7 dilated convolutions over [feat, flow] producing a
/// 2-channel residual added to the flow.
pub fn context_refine<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    feat: Var,
    flow: Var,
) -> Result<Var, NetError> {
    let fs = fwd.tape.shape(feat);
    let ls = fwd.tape.shape(flow);
    if fs.spatial() != ls.spatial() || fs.n != ls.n {
        return Err(pcl_autodiff::AdError::ShapeMismatch {
            op: "context_refine",
            detail: format!("feat {} vs flow {}", fs, ls),
        }
        .into());
    }
    let x = fwd.tape.concat_channels(&[feat, flow])?;
    let residual =
        dilated_conv_stack(fwd, "decoder.context", x, &cfg.context_dilations, &cfg.context_widths)?;
    Ok(fwd.tape.add(flow, residual)?)
}

/// Decode one timestep's motion features (levels 1..4) into a flow pyramid.
///
/// Blocks run coarse to fine. Block k consumes the matching-stride motion
/// feature (blocks 1-4) and the 2x-upsampled feat/flow of block k-1; block 5
/// has no pyramid level and sees only upsampled state. In PCLNetC mode each
/// of blocks 1-4 additionally receives its level's refined hidden map.
pub fn decode_flows<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    motion: &[MotionFeature; 4],
) -> Result<FlowPyramidVars, NetError> {
    let mut prev: Option<(Var, Var)> = None;
    let mut scales = Vec::with_capacity(5);
    for block in 0..5 {
        let level = if block < 4 { Some(3 - block) } else { None };
        let mut inputs = OfeInputs::default();
        if let Some(level) = level {
            inputs.motion = Some(motion[level].dense);
            if cfg.variant == Variant::PclNetC {
                inputs.couple = Some(motion[level].refined);
            }
        }
        if let Some((feat, flow)) = prev {
            let up_feat = fwd.tape.upsample2x_bilinear(feat);
            let up_flow_raw = fwd.tape.upsample2x_bilinear(flow);
            inputs.prev_feat = Some(up_feat);
            inputs.prev_flow = Some(fwd.tape.scale(up_flow_raw, 2.0));
        }
        let (feat, flow) = ofe_block(fwd, &format!("decoder.b{}", block + 1), inputs, cfg.variant)?;
        prev = Some((feat, flow));
        scales.push(flow);
    }
    let (feat5, flow5) = prev.expect("five blocks ran");
    let refined = context_refine(fwd, cfg, feat5, flow5)?;
    scales[4] = refined;
    let up = fwd.tape.upsample2x_bilinear(refined);
    let full = fwd.tape.scale(up, 2.0);
    Ok(FlowPyramidVars { scales: [scales[0], scales[1], scales[2], scales[3], scales[4]], full })
}
