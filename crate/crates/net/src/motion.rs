//! Motion concentration: per-level ConvLSTMs over the feature pyramid,
//! selection of the latter l-1 hidden states, refinement, fine-to-coarse
//! passing, and SPP aggregation into dense motion features.

use pcl_autodiff::{Scalar, Var};

use crate::backbone::PyramidFeatures;
use crate::blocks::{convlstm_sequence, spp, spp_broadcast, SppDescriptor};
use crate::config::ModelConfig;
use crate::error::NetError;
use crate::model::Fwd;

/// Motion representation of one pyramid level at one timestep.
#[derive(Debug, Clone)]
pub struct MotionFeature {
    /// 0-based pyramid level.
    pub level: usize,
    /// 0-based transition index (frame t -> t+1).
    pub timestep: usize,
    /// Reduced hidden map concatenated with the broadcast SPP planes;
    /// (1 + bins) * motion_channels channels at the level's extents.
    pub dense: Var,
    /// Refined hidden map before channel reduction (PCLNetC couple input).
    pub refined: Var,
    /// Pooled descriptor maps, retained for export.
    pub descriptor: SppDescriptor,
}

/// All motion features of a clip: `features[t][level]` for the l-1 frame
/// transitions and 4 pyramid levels.
pub struct MotionOutput {
    pub features: Vec<[MotionFeature; 4]>,
}

impl MotionOutput {
    pub fn timesteps(&self) -> usize {
        self.features.len()
    }
}

/// Run the motion-concentration module over per-frame pyramids.
///
/// Each level's ConvLSTM consumes that level's feature maps; levels past the
/// first additionally receive the previous level's refined hidden states,
/// downsampled by a stride-2 convolution and concatenated channel-wise
/// (fine-to-coarse passing). Refinement (two 3x3 convolutions with leaky
/// rectifier) is applied to every hidden state so the pass-down input exists
/// at all l timesteps; motion features keep only timesteps 2..l.
pub fn concentrate<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    pyramids: &[PyramidFeatures],
) -> Result<MotionOutput, NetError> {
    let l = pyramids.len();
    if l < 2 {
        return Err(NetError::ClipTooShort(l));
    }

    // refined[t] of the level below the current one.
    let mut passed: Option<Vec<Var>> = None;
    let mut per_level: Vec<Vec<MotionFeature>> = Vec::with_capacity(4);

    for level in 0..4 {
        let prefix = format!("motion.l{}", level + 1);
        let xs: Vec<Var> = match &passed {
            None => pyramids.iter().map(|p| p[level]).collect(),
            Some(prev) => {
                let mut xs = Vec::with_capacity(l);
                for (t, p) in pyramids.iter().enumerate() {
                    let down_prefix = format!("motion.l{level}");
                    let down = fwd.conv(&format!("{down_prefix}.down"), prev[t], 2, 1, 1)?;
                    let down = fwd.leaky(down);
                    xs.push(fwd.tape.concat_channels(&[p[level], down])?);
                }
                xs
            }
        };

        let states = convlstm_sequence(fwd, &prefix, &xs)?;
        let mut refined = Vec::with_capacity(l);
        for state in &states {
            let r = fwd.conv(&format!("{prefix}.refine1"), state.hidden, 1, 1, 1)?;
            let r = fwd.leaky(r);
            let r = fwd.conv(&format!("{prefix}.refine2"), r, 1, 1, 1)?;
            refined.push(fwd.leaky(r));
        }

        let mut feats = Vec::with_capacity(l - 1);
        for t in 1..l {
            let reduced = fwd.conv(&format!("{prefix}.reduce"), refined[t], 1, 0, 1)?;
            let descriptor = spp(fwd, reduced, &cfg.spp_bins)?;
            let s = fwd.tape.shape(reduced);
            let broadcast = spp_broadcast(fwd, &descriptor, s.h, s.w)?;
            let dense = fwd.tape.concat_channels(&[reduced, broadcast])?;
            feats.push(MotionFeature { level, timestep: t - 1, dense, refined: refined[t], descriptor });
        }
        per_level.push(feats);
        passed = Some(refined);
    }

    // Transpose to per-timestep layout.
    let features = (0..l - 1)
        .map(|t| {
            [
                per_level[0][t].clone(),
                per_level[1][t].clone(),
                per_level[2][t].clone(),
                per_level[3][t].clone(),
            ]
        })
        .collect();
    Ok(MotionOutput { features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::extract_clip_pyramids;
    use crate::model::{init_params, Fwd};
    use pcl_autodiff::{ParamStore, Shape, Tape, Tensor};

    fn frame(seed: f64) -> Tensor<f64> {
        Tensor::from_fn(Shape::new(1, 3, 64, 64), |_, c, y, x| {
            0.5 + 0.4 * ((c as f64) + seed + 0.21 * y as f64 + 0.13 * x as f64).sin()
        })
    }

    fn run_motion(
        store: &ParamStore<f64>,
        cfg: &ModelConfig,
        frames: Vec<Tensor<f64>>,
    ) -> (Tape<f64>, MotionOutput) {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, cfg);
        let vars: Vec<_> = frames.into_iter().map(|f| fwd.tape.constant(f)).collect();
        let pyramids = extract_clip_pyramids(&mut fwd, cfg, &vars).unwrap();
        let motion = concentrate(&mut fwd, cfg, &pyramids).unwrap();
        (tape, motion)
    }

    #[test]
    fn six_frames_give_twenty_features() {
        let cfg = ModelConfig::desk();
        let store = init_params(&cfg, 3);
        let frames: Vec<_> = (0..6).map(|t| frame(t as f64)).collect();
        let (_, motion) = run_motion(&store, &cfg, frames);
        assert_eq!(motion.timesteps(), 5);
        let total: usize = motion.features.iter().map(|per| per.len()).sum();
        assert_eq!(total, 20);
    }

    #[test]
    fn dense_channels_at_desk_config() {
        let cfg = ModelConfig::desk();
        let store = init_params(&cfg, 3);
        let (tape, motion) = run_motion(&store, &cfg, vec![frame(0.0), frame(1.0)]);
        for mf in &motion.features[0] {
            let s = tape.shape(mf.dense);
            assert_eq!(s.c, 64, "level {}", mf.level);
        }
        // Level extents follow the pyramid.
        assert_eq!(tape.shape(motion.features[0][0].dense).spatial(), (16, 16));
        assert_eq!(tape.shape(motion.features[0][3].dense).spatial(), (2, 2));
    }

    #[test]
    fn zero_params_zero_features() {
        let cfg = ModelConfig::desk();
        let init = init_params::<f64>(&cfg, 0);
        let mut store = ParamStore::new();
        for (name, t) in init.iter() {
            store.insert(name, Tensor::zeros(t.shape())).unwrap();
        }
        let (tape, motion) = run_motion(&store, &cfg, vec![frame(0.0), frame(1.0)]);
        for mf in &motion.features[0] {
            assert!(tape.value(mf.dense).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn reversal_changes_features() {
        let cfg = ModelConfig::desk();
        let store = init_params(&cfg, 17);
        let clip: Vec<_> = (0..4).map(|t| frame(1.7 * t as f64)).collect();
        let mut reversed = clip.clone();
        reversed.reverse();
        let (tape_a, motion_a) = run_motion(&store, &cfg, clip);
        let (tape_b, motion_b) = run_motion(&store, &cfg, reversed);
        let a = tape_a.value(motion_a.features[2][0].dense);
        let b = tape_b.value(motion_b.features[2][0].dense);
        assert!(a.max_abs_diff(b) > 1e-6);
    }

    #[test]
    fn gradient_reaches_every_parameter_group() {
        let cfg = ModelConfig::desk();
        let store = init_params::<f64>(&cfg, 23);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, true);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let vars: Vec<_> = (0..2).map(|t| fwd.tape.constant(frame(t as f64 * 0.9))).collect();
        let pyramids = extract_clip_pyramids(&mut fwd, &cfg, &vars).unwrap();
        let motion = concentrate(&mut fwd, &cfg, &pyramids).unwrap();
        // Sum of all dense maps reaches every motion/backbone parameter.
        let mut loss = None;
        for mf in &motion.features[0] {
            let s = fwd.tape.sum_all(mf.dense);
            loss = Some(match loss {
                None => s,
                Some(acc) => fwd.tape.add(acc, s).unwrap(),
            });
        }
        let grads = tape.backward(loss.unwrap()).unwrap();
        for name in bound.names() {
            if name.starts_with("decoder.") {
                continue;
            }
            let g = grads.get(bound.var(name));
            assert!(g.is_some(), "no gradient for {name}");
            assert!(
                g.unwrap().data().iter().any(|&v| v != 0.0),
                "all-zero gradient for {name}"
            );
        }
    }
}
