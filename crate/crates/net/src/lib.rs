//! PCLNet: unsupervised optical flow from pyramid ConvLSTM motion features.
//!
//! The model has three parts. A small residual backbone extracts a 4-level
//! feature pyramid per frame. The motion-concentration module runs one
//! ConvLSTM per pyramid level across the clip, refines the hidden states,
//! passes them fine-to-coarse, and compresses each level into fixed-length
//! spatial-pyramid-pooled motion features. The flow decoder stacks five OFE
//! blocks coarse-to-fine (plus a dilated context block) to reconstruct one
//! flow pyramid per frame transition, trained either on end-point error or on
//! photometric reconstruction of adjacent frames via inverse warping.

mod backbone;
mod blocks;
mod config;
mod decoder;
mod error;
mod losses;
mod model;
mod motion;

pub use backbone::{extract_clip_pyramids, extract_pyramid, PyramidFeatures};
pub use blocks::{
    convlstm_sequence, convlstm_step, convlstm_step_detailed, dilated_conv_stack, spp, spp_broadcast,
    spp_descriptor_len, ConvLstmGates, ConvLstmState, SppDescriptor,
};
pub use config::{ModelConfig, Variant};
pub use decoder::{context_refine, decode_flows, ofe_block, FlowPyramidVars, OfeInputs};
pub use error::NetError;
pub use losses::{
    charbonnier_loss, epe_loss, inverse_warp, mssim_loss, multi_scale_epe_loss, psnr_loss,
    reconstruction_loss, LossConfig,
};
pub use model::{forward_clip, init_params, param_count, Fwd};
pub use motion::{concentrate, MotionFeature, MotionOutput};
