//! Inverse warping and the reconstruction loss family: Charbonnier, modified
//! PSNR, windowed MSSIM, their weighted multi-scale sum, and end-point error.

use pcl_autodiff::{Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::decoder::FlowPyramidVars;
use crate::error::NetError;
use crate::model::Fwd;

/// Loss hyperparameters. Defaults: Charbonnier exponent 0.4 with offset 1e-6,
/// 7x7 SSIM tiles with the standard [0,1]-range constants, weights
/// 1.0 / 0.2 / 0.5 for difference / PSNR / MSSIM, equal per-scale weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub ssim_window: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub scale_weights: Vec<f64>,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.4,
            epsilon: 1e-6,
            ssim_window: 7,
            beta1: 1.0,
            beta2: 0.2,
            beta3: 0.5,
            scale_weights: vec![1.0; 5],
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(NetError::Config(format!("alpha {} must be in (0, 1]", self.alpha)));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 || self.beta3 < 0.0 {
            return Err(NetError::Config("loss weights must be non-negative".into()));
        }
        if self.ssim_window == 0 {
            return Err(NetError::Config("ssim window must be positive".into()));
        }
        Ok(())
    }
}

/// Reconstruct a frame by sampling `image` at (x + u, y + v), border-clamped.
pub fn inverse_warp<T: Scalar>(fwd: &mut Fwd<T>, image: Var, flow: Var) -> Result<Var, NetError> {
    Ok(fwd.tape.warp_bilinear(image, flow)?)
}

/// Mean over all elements of ((a - b)^2 + epsilon)^alpha.
pub fn charbonnier_loss<T: Scalar>(
    fwd: &mut Fwd<T>,
    a: Var,
    b: Var,
    alpha: f64,
    epsilon: f64,
) -> Result<Var, NetError> {
    let diff = fwd.tape.sub(a, b)?;
    let sq = fwd.tape.mul(diff, diff)?;
    let shifted = fwd.tape.add_scalar(sq, epsilon);
    let powed = fwd.tape.powf(shifted, alpha);
    Ok(fwd.tape.mean_all(powed))
}

/// Non-negative PSNR-style loss: 10 * log10(1 + MSE), zero iff a == b.
pub fn psnr_loss<T: Scalar>(fwd: &mut Fwd<T>, a: Var, b: Var) -> Result<Var, NetError> {
    let diff = fwd.tape.sub(a, b)?;
    let sq = fwd.tape.mul(diff, diff)?;
    let mse = fwd.tape.mean_all(sq);
    let shifted = fwd.tape.add_scalar(mse, 1.0);
    let ln = fwd.tape.ln(shifted);
    Ok(fwd.tape.scale(ln, 10.0 / std::f64::consts::LN_10))
}

/// 1 - mean SSIM over non-overlapping window x window tiles (trailing partial
/// tiles dropped). Inputs are expected in [0, 1].
pub fn mssim_loss<T: Scalar>(
    fwd: &mut Fwd<T>,
    a: Var,
    b: Var,
    window: usize,
    c1: f64,
    c2: f64,
) -> Result<Var, NetError> {
    let s = fwd.tape.shape(a);
    if s.h < window || s.w < window {
        return Err(NetError::WindowTooLarge { window, h: s.h, w: s.w });
    }
    let tape = &mut *fwd.tape;
    let mu1 = tape.avg_pool2d(a, window, window)?;
    let mu2 = tape.avg_pool2d(b, window, window)?;
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let e_aa = tape.avg_pool2d(aa, window, window)?;
    let e_bb = tape.avg_pool2d(bb, window, window)?;
    let e_ab = tape.avg_pool2d(ab, window, window)?;

    let mu1_sq = tape.mul(mu1, mu1)?;
    let mu2_sq = tape.mul(mu2, mu2)?;
    let mu12 = tape.mul(mu1, mu2)?;
    let var1 = tape.sub(e_aa, mu1_sq)?;
    let var2 = tape.sub(e_bb, mu2_sq)?;
    let cov = tape.sub(e_ab, mu12)?;

    let lum_num = {
        let t = tape.scale(mu12, 2.0);
        tape.add_scalar(t, c1)
    };
    let lum_den = {
        let t = tape.add(mu1_sq, mu2_sq)?;
        tape.add_scalar(t, c1)
    };
    let str_num = {
        let t = tape.scale(cov, 2.0);
        tape.add_scalar(t, c2)
    };
    let str_den = {
        let t = tape.add(var1, var2)?;
        tape.add_scalar(t, c2)
    };
    let num = tape.mul(lum_num, str_num)?;
    let den = tape.mul(lum_den, str_den)?;
    let ssim_map = tape.div(num, den)?;
    let mean = tape.mean_all(ssim_map);
    let neg = tape.scale(mean, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Weighted sum beta1 * L_diff + beta2 * L_psnr + beta3 * L_mssim for one
/// reconstructed/reference pair at one scale. MSSIM is skipped when the tile
/// does not fit.
fn pair_loss<T: Scalar>(fwd: &mut Fwd<T>, recon: Var, reference: Var, cfg: &LossConfig) -> Result<Var, NetError> {
    let diff = charbonnier_loss(fwd, recon, reference, cfg.alpha, cfg.epsilon)?;
    let mut total = fwd.tape.scale(diff, cfg.beta1);
    if cfg.beta2 != 0.0 {
        let p = psnr_loss(fwd, recon, reference)?;
        let p = fwd.tape.scale(p, cfg.beta2);
        total = fwd.tape.add(total, p)?;
    }
    let s = fwd.tape.shape(recon);
    if cfg.beta3 != 0.0 && s.h >= cfg.ssim_window && s.w >= cfg.ssim_window {
        let m = mssim_loss(fwd, recon, reference, cfg.ssim_window, cfg.ssim_c1, cfg.ssim_c2)?;
        let m = fwd.tape.scale(m, cfg.beta3);
        total = fwd.tape.add(total, m)?;
    }
    Ok(total)
}

/// Unsupervised reconstruction loss over a clip.
///
/// For transition t and every predicted scale: both frames are mean-pooled to
/// the flow's resolution, the later frame is inverse-warped by the predicted
/// flow, and the weighted similarity losses accumulate across scales and
/// transitions.
pub fn reconstruction_loss<T: Scalar>(
    fwd: &mut Fwd<T>,
    frames: &[Var],
    pyramids: &[FlowPyramidVars],
    cfg: &LossConfig,
) -> Result<Var, NetError> {
    if frames.len() != pyramids.len() + 1 {
        return Err(NetError::PyramidCount {
            frames: frames.len(),
            got: pyramids.len(),
            expected: frames.len().saturating_sub(1),
        });
    }
    let mut total: Option<Var> = None;
    for (t, pyramid) in pyramids.iter().enumerate() {
        let i1 = frames[t];
        let i2 = frames[t + 1];
        for (si, &stride) in FlowPyramidVars::STRIDES.iter().enumerate() {
            let weight = cfg.scale_weights.get(si).copied().unwrap_or(1.0);
            if weight == 0.0 {
                continue;
            }
            let flow = pyramid.scales[si];
            let (i1_s, i2_s) = if stride == 1 {
                (i1, i2)
            } else {
                (fwd.tape.avg_pool2d(i1, stride, stride)?, fwd.tape.avg_pool2d(i2, stride, stride)?)
            };
            let recon = inverse_warp(fwd, i2_s, flow)?;
            let term = pair_loss(fwd, recon, i1_s, cfg)?;
            let term = fwd.tape.scale(term, weight);
            total = Some(match total {
                None => term,
                Some(acc) => fwd.tape.add(acc, term)?,
            });
        }
    }
    Ok(total.expect("at least one scale"))
}

/// Mean end-point error with a 1e-12 guard inside the square root, usable as
/// a differentiable loss and as a metric.
pub fn epe_loss<T: Scalar>(fwd: &mut Fwd<T>, pred: Var, gt: Var) -> Result<Var, NetError> {
    let diff = fwd.tape.sub(pred, gt)?;
    let du = fwd.tape.slice_channels(diff, 0, 1)?;
    let dv = fwd.tape.slice_channels(diff, 1, 1)?;
    let du2 = fwd.tape.mul(du, du)?;
    let dv2 = fwd.tape.mul(dv, dv)?;
    let sum = fwd.tape.add(du2, dv2)?;
    let guarded = fwd.tape.add_scalar(sum, 1e-12);
    let dist = fwd.tape.sqrt(guarded);
    Ok(fwd.tape.mean_all(dist))
}

/// Supervised multi-scale loss: the ground truth is pooled to each predicted
/// scale with its values divided by the stride (flow lives in pixels at its
/// own resolution), then EPE is accumulated with the per-scale weights.
pub fn multi_scale_epe_loss<T: Scalar>(
    fwd: &mut Fwd<T>,
    pyramids: &[FlowPyramidVars],
    gt_flows: &[Var],
    cfg: &LossConfig,
) -> Result<Var, NetError> {
    if gt_flows.len() != pyramids.len() {
        return Err(NetError::PyramidCount {
            frames: gt_flows.len() + 1,
            got: pyramids.len(),
            expected: gt_flows.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (pyramid, &gt) in pyramids.iter().zip(gt_flows) {
        for (si, &stride) in FlowPyramidVars::STRIDES.iter().enumerate() {
            let weight = cfg.scale_weights.get(si).copied().unwrap_or(1.0);
            if weight == 0.0 {
                continue;
            }
            let gt_s = if stride == 1 {
                gt
            } else {
                let pooled = fwd.tape.avg_pool2d(gt, stride, stride)?;
                fwd.tape.scale(pooled, 1.0 / stride as f64)
            };
            let term = epe_loss(fwd, pyramid.scales[si], gt_s)?;
            let term = fwd.tape.scale(term, weight);
            total = Some(match total {
                None => term,
                Some(acc) => fwd.tape.add(acc, term)?,
            });
        }
    }
    Ok(total.expect("at least one scale"))
}
