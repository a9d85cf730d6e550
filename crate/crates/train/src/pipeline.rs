//! Glue between datasets, the model, and the losses: batched forward passes,
//! gradient extraction, EPE evaluation, inference, and motion-feature export.

use std::collections::HashMap;
use std::time::Instant;

use pcl_autodiff::{ParamStore, Scalar, Shape, Tape, Tensor, Var};
use pcl_data::{Clip, FlowField, PclfFile};
use pcl_net::{
    concentrate, extract_clip_pyramids, forward_clip, init_params, multi_scale_epe_loss,
    reconstruction_loss, spp_descriptor_len, Fwd, FlowPyramidVars,
};

use crate::config::{Mode, TrainConfig};
use crate::error::TrainError;

pub struct Pipeline<T: Scalar> {
    pub cfg: TrainConfig,
    pub params: ParamStore<T>,
}

#[derive(Debug, Clone)]
pub struct EpeReport {
    pub clips: usize,
    pub transitions: usize,
    /// Mean full-resolution EPE over all transitions.
    pub mean_epe: f64,
    /// Median over per-clip mean EPEs.
    pub median_epe: f64,
    /// (stride, mean EPE at that scale).
    pub per_scale: Vec<(usize, f64)>,
    pub sec_per_clip: f64,
}

impl EpeReport {
    pub fn csv_header() -> &'static str {
        "dataset,clips,mean_epe,median_epe,sec_per_clip"
    }

    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{dataset},{},{:.6},{:.6},{:.4}",
            self.clips, self.mean_epe, self.median_epe, self.sec_per_clip
        )
    }
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let params = init_params(&cfg.model, cfg.seed);
        Ok(Pipeline { cfg, params })
    }

    pub fn from_params(cfg: TrainConfig, params: ParamStore<T>) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(Pipeline { cfg, params })
    }

    /// Stack per-clip frames (1x3xHxW each) into one NxCxHxW batch per
    /// timestep.
    fn stack_frames(clips: &[Clip<T>], t: usize) -> Tensor<T> {
        let s = clips[0].frames[t].shape();
        let mut out = Tensor::zeros(Shape::new(clips.len(), s.c, s.h, s.w));
        for (n, clip) in clips.iter().enumerate() {
            for c in 0..s.c {
                let src = clip.frames[t].plane(0, c);
                let start = out.shape().idx(n, c, 0, 0);
                out.data_mut()[start..start + src.len()].copy_from_slice(src);
            }
        }
        out
    }

    fn stack_gt_flows(clips: &[Clip<T>], t: usize) -> Result<Tensor<T>, TrainError> {
        let first = clips[0]
            .gt_flows
            .as_ref()
            .ok_or(TrainError::MissingGroundTruth("supervised training"))?;
        let (h, w) = (first[t].height(), first[t].width());
        let mut out = Tensor::zeros(Shape::new(clips.len(), 2, h, w));
        for (n, clip) in clips.iter().enumerate() {
            let flows =
                clip.gt_flows.as_ref().ok_or(TrainError::MissingGroundTruth("supervised training"))?;
            for c in 0..2 {
                let src = flows[t].tensor().plane(0, c);
                let start = out.shape().idx(n, c, 0, 0);
                out.data_mut()[start..start + src.len()].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    fn check_batch(&self, clips: &[Clip<T>]) -> Result<(), TrainError> {
        if clips.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let s0 = clips[0].frames[0].shape();
        let l0 = clips[0].len();
        for clip in clips {
            if clip.frames[0].shape() != s0 || clip.len() != l0 {
                return Err(TrainError::Config(format!(
                    "batch mixes clip geometries: {} frames {} vs {} frames {}",
                    l0,
                    s0,
                    clip.len(),
                    clip.frames[0].shape()
                )));
            }
        }
        Ok(())
    }

    /// One forward (and optionally backward) pass over a batch of clips.
    /// Returns the scalar loss and, when `train` is set, gradients keyed by
    /// parameter name.
    pub fn batch_loss(
        &self,
        clips: &[Clip<T>],
        train: bool,
    ) -> Result<(f64, Option<HashMap<String, Tensor<T>>>), TrainError> {
        self.check_batch(clips)?;
        let l = clips[0].len();
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, train);
        let mut fwd = Fwd::new(&mut tape, &bound, &self.cfg.model);

        let frames: Vec<Var> =
            (0..l).map(|t| fwd.tape.constant(Self::stack_frames(clips, t))).collect();
        let pyramids = forward_clip(&mut fwd, &self.cfg.model, &frames)?;

        let loss = match self.cfg.mode {
            Mode::UnsupervisedReconstruction => {
                reconstruction_loss(&mut fwd, &frames, &pyramids, &self.cfg.loss)?
            }
            Mode::SupervisedEpe => {
                let gts: Vec<Var> = (0..l - 1)
                    .map(|t| Ok(fwd.tape.constant(Self::stack_gt_flows(clips, t)?)))
                    .collect::<Result<_, TrainError>>()?;
                multi_scale_epe_loss(&mut fwd, &pyramids, &gts, &self.cfg.loss)?
            }
        };
        let loss_value = tape.value(loss).item().into_f64();

        if !train {
            return Ok((loss_value, None));
        }
        let mut grads_by_var = tape.backward(loss)?;
        let mut named = HashMap::with_capacity(self.params.len());
        for name in bound.names() {
            if let Some(g) = grads_by_var.take(bound.var(name)) {
                named.insert(name.to_string(), g);
            }
        }
        Ok((loss_value, Some(named)))
    }

    /// Full-resolution flows for every transition of one clip (batch 1),
    /// plus the per-scale flow values needed by evaluation.
    fn forward_clip_flows(&self, clip: &Clip<T>) -> Result<(Tape<T>, Vec<FlowPyramidVars>), TrainError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &self.cfg.model);
        let frames: Vec<Var> =
            clip.frames.iter().map(|f| fwd.tape.constant(f.clone())).collect();
        let pyramids = forward_clip(&mut fwd, &self.cfg.model, &frames)?;
        Ok((tape, pyramids))
    }

    /// Predicted full-resolution flow fields for one clip.
    pub fn infer_clip(&self, clip: &Clip<T>) -> Result<Vec<FlowField<T>>, TrainError> {
        let (tape, pyramids) = self.forward_clip_flows(clip)?;
        pyramids
            .iter()
            .map(|p| FlowField::new(tape.value(p.full).clone()).map_err(TrainError::Data))
            .collect()
    }

    /// Mean/median full-resolution EPE plus per-scale means over a
    /// ground-truth dataset.
    pub fn evaluate(&self, clips: &[Clip<T>]) -> Result<EpeReport, TrainError> {
        if clips.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let strides = FlowPyramidVars::STRIDES;
        let mut all_epe = Vec::new();
        let mut clip_means = Vec::new();
        let mut per_scale_sums = vec![0.0f64; strides.len()];
        let mut per_scale_count = 0usize;
        let started = Instant::now();

        for clip in clips {
            let gt = clip.gt_flows.as_ref().ok_or(TrainError::MissingGroundTruth("evaluation"))?;
            let (mut tape, pyramids) = self.forward_clip_flows(clip)?;
            let mut clip_sum = 0.0;
            for (t, pyramid) in pyramids.iter().enumerate() {
                let pred = FlowField::new(tape.value(pyramid.full).clone())?;
                let e = pred.epe(&gt[t]);
                all_epe.push(e);
                clip_sum += e;

                let gt_var = tape.constant(gt[t].tensor().clone());
                for (si, &stride) in strides.iter().enumerate() {
                    let gt_s = if stride == 1 {
                        gt_var
                    } else {
                        let pooled = tape.avg_pool2d(gt_var, stride, stride)?;
                        tape.scale(pooled, 1.0 / stride as f64)
                    };
                    let scale_pred = FlowField::new(tape.value(pyramid.scales[si]).clone())?;
                    let scale_gt = FlowField::new(tape.value(gt_s).clone())?;
                    per_scale_sums[si] += scale_pred.epe(&scale_gt);
                }
                per_scale_count += 1;
            }
            clip_means.push(clip_sum / pyramids.len() as f64);
        }

        let elapsed = started.elapsed().as_secs_f64();
        let mean = all_epe.iter().sum::<f64>() / all_epe.len() as f64;
        clip_means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if clip_means.len() % 2 == 1 {
            clip_means[clip_means.len() / 2]
        } else {
            0.5 * (clip_means[clip_means.len() / 2 - 1] + clip_means[clip_means.len() / 2])
        };
        Ok(EpeReport {
            clips: clips.len(),
            transitions: all_epe.len(),
            mean_epe: mean,
            median_epe: median,
            per_scale: strides
                .iter()
                .zip(per_scale_sums)
                .map(|(&s, sum)| (s, sum / per_scale_count as f64))
                .collect(),
            sec_per_clip: elapsed / clips.len() as f64,
        })
    }

    /// Fixed-length motion descriptors per clip and timestep (levels
    /// concatenated), as stored in the PCLF export.
    pub fn export_motion_descriptors(&self, clips: &[Clip<T>]) -> Result<PclfFile, TrainError> {
        if clips.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let cfg = &self.cfg.model;
        let per_level = spp_descriptor_len(cfg.motion_channels, &cfg.spp_bins);
        let timesteps = clips[0].len() - 1;
        let mut file = PclfFile::new(timesteps, per_level * 4);
        for clip in clips {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, false);
            let mut fwd = Fwd::new(&mut tape, &bound, cfg);
            let frames: Vec<Var> =
                clip.frames.iter().map(|f| fwd.tape.constant(f.clone())).collect();
            let pyramids = extract_clip_pyramids(&mut fwd, cfg, &frames)?;
            let motion = concentrate(&mut fwd, cfg, &pyramids)?;
            let mut steps = Vec::with_capacity(timesteps);
            for per_level_feats in &motion.features {
                let mut descriptor = Vec::with_capacity(file.length);
                for mf in per_level_feats.iter() {
                    for &(_, map) in &mf.descriptor.maps {
                        descriptor
                            .extend(tape.value(map).data().iter().map(|v| v.into_f64() as f32));
                    }
                }
                debug_assert_eq!(descriptor.len(), file.length);
                steps.push(descriptor);
            }
            file.push_clip(steps);
        }
        Ok(file)
    }
}

/// Center-crop a clip to extents divisible by 32; identity when already
/// aligned.
pub fn center_crop_to_32<T: Scalar>(clip: &Clip<T>) -> Result<Clip<T>, TrainError> {
    let (h, w) = (clip.height(), clip.width());
    let (th, tw) = (h - h % 32, w - w % 32);
    if th == h && tw == w {
        return Ok(clip.clone());
    }
    if th == 0 || tw == 0 {
        return Err(TrainError::Config(format!("frames {h}x{w} too small for stride-32 pyramid")));
    }
    let (oy, ox) = ((h - th) / 2, (w - tw) / 2);
    let frames = clip
        .frames
        .iter()
        .map(|f| {
            Tensor::from_fn(Shape::new(1, 3, th, tw), |_, c, y, x| f.at(0, c, y + oy, x + ox))
        })
        .collect();
    let flows = clip.gt_flows.as_ref().map(|flows| {
        flows
            .iter()
            .map(|fl| {
                FlowField::from_fn(th, tw, |y, x| {
                    (fl.u(y + oy, x + ox).into_f64(), fl.v(y + oy, x + ox).into_f64())
                })
            })
            .collect()
    });
    Clip::new(frames, flows, format!("{}+crop", clip.source)).map_err(TrainError::Data)
}
