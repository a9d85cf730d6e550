//! Joint clip augmentation: one random draw applies identically to every
//! frame (and ground-truth flow) of a clip.

use pcl_autodiff::{Scalar, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Clip;
use crate::error::DataError;
use crate::flow::FlowField;

#[derive(Debug, Clone, Default)]
pub struct AugmentOps {
    /// Target (height, width) of a random crop; both divisible by 32.
    pub crop: Option<(usize, usize)>,
    /// Uniform random scale factor range; requires `crop` to restore
    /// divisible extents after resizing.
    pub scale_range: Option<(f64, f64)>,
    pub hflip: bool,
    pub vflip: bool,
}

/// Flow transformation rules: hflip negates u, vflip negates v, scaling
/// multiplies values by the resize factor, cropping only moves the origin.
pub fn augment_clip<T: Scalar>(clip: &Clip<T>, ops: &AugmentOps, seed: u64) -> Result<Clip<T>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (clip.height(), clip.width());

    if let Some((ch, cw)) = ops.crop {
        if ch % 32 != 0 || cw % 32 != 0 {
            return Err(DataError::Indivisible { h: ch, w: cw });
        }
    } else if ops.scale_range.is_some() {
        return Err(DataError::ScaleNeedsCrop);
    }

    // One parameter draw for the whole clip.
    let scale = ops.scale_range.map(|(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) });
    let (sh, sw) = match scale {
        None => (h, w),
        Some(s) => (((h as f64) * s).round() as usize, ((w as f64) * s).round() as usize),
    };
    let (th, tw) = ops.crop.unwrap_or((sh, sw));
    if th > sh || tw > sw {
        return Err(DataError::CropTooLarge { ch: th, cw: tw, h: sh, w: sw });
    }
    let oy = if sh == th { 0 } else { rng.gen_range(0..=sh - th) };
    let ox = if sw == tw { 0 } else { rng.gen_range(0..=sw - tw) };
    let do_hflip = ops.hflip && rng.gen_bool(0.5);
    let do_vflip = ops.vflip && rng.gen_bool(0.5);

    let fx = sw as f64 / w as f64;
    let fy = sh as f64 / h as f64;

    let mut frames = Vec::with_capacity(clip.len());
    for frame in &clip.frames {
        let mut t = if scale.is_some() { resize_bilinear(frame, sh, sw) } else { frame.clone() };
        t = crop(&t, oy, ox, th, tw);
        if do_hflip {
            t = flip(&t, true);
        }
        if do_vflip {
            t = flip(&t, false);
        }
        frames.push(t);
    }

    let gt_flows = match &clip.gt_flows {
        None => None,
        Some(flows) => {
            let mut out = Vec::with_capacity(flows.len());
            for fl in flows {
                let mut t = if scale.is_some() {
                    let resized = resize_bilinear(fl.tensor(), sh, sw);
                    scale_flow_values(&resized, fx, fy)
                } else {
                    fl.tensor().clone()
                };
                t = crop(&t, oy, ox, th, tw);
                if do_hflip {
                    t = flip(&t, true);
                    t = negate_channel(&t, 0);
                }
                if do_vflip {
                    t = flip(&t, false);
                    t = negate_channel(&t, 1);
                }
                out.push(FlowField::new(t)?);
            }
            Some(out)
        }
    };

    Clip::new(frames, gt_flows, format!("{}+aug{seed}", clip.source))
}

/// General bilinear resize, align-corners = false, border clamp.
fn resize_bilinear<T: Scalar>(src: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let s = src.shape();
    let map = |dst: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        let v = (dst as f64 + 0.5) * inp as f64 / out as f64 - 0.5;
        let v = v.clamp(0.0, (inp - 1) as f64);
        let i0 = v.floor() as usize;
        (i0, (i0 + 1).min(inp - 1), v - i0 as f64)
    };
    let ymap: Vec<_> = (0..out_h).map(|d| map(d, out_h, s.h)).collect();
    let xmap: Vec<_> = (0..out_w).map(|d| map(d, out_w, s.w)).collect();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = src.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for oy in 0..out_h {
                let (y0, y1, fy) = ymap[oy];
                for ox in 0..out_w {
                    let (x0, x1, fx) = xmap[ox];
                    let v00 = plane[y0 * s.w + x0].into_f64();
                    let v01 = plane[y0 * s.w + x1].into_f64();
                    let v10 = plane[y1 * s.w + x0].into_f64();
                    let v11 = plane[y1 * s.w + x1].into_f64();
                    let top = v00 + fx * (v01 - v00);
                    let bot = v10 + fx * (v11 - v10);
                    out_plane[oy * out_w + ox] = T::of(top + fy * (bot - top));
                }
            }
        }
    }
    out
}

fn crop<T: Scalar>(src: &Tensor<T>, oy: usize, ox: usize, h: usize, w: usize) -> Tensor<T> {
    let s = src.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, x| src.at(n, c, y + oy, x + ox))
}

fn flip<T: Scalar>(src: &Tensor<T>, horizontal: bool) -> Tensor<T> {
    let s = src.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        if horizontal {
            src.at(n, c, y, s.w - 1 - x)
        } else {
            src.at(n, c, s.h - 1 - y, x)
        }
    })
}

fn negate_channel<T: Scalar>(src: &Tensor<T>, channel: usize) -> Tensor<T> {
    let s = src.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        let v = src.at(n, c, y, x);
        if c == channel {
            -v
        } else {
            v
        }
    })
}

/// u scales with the horizontal factor, v with the vertical one.
fn scale_flow_values<T: Scalar>(flow: &Tensor<T>, fx: f64, fy: f64) -> Tensor<T> {
    let s = flow.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        let v = flow.at(n, c, y, x);
        if c == 0 {
            v * T::of(fx)
        } else {
            v * T::of(fy)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_clip() -> Clip<f64> {
        let frames = (0..2)
            .map(|t| {
                Tensor::from_fn(Shape::new(1, 3, 64, 64), |_, c, y, x| {
                    ((c + t) as f64 * 0.1 + (y * 64 + x) as f64 / 8192.0).fract()
                })
            })
            .collect();
        let flows = vec![FlowField::constant(64, 64, 3.0, 1.0)];
        Clip::new(frames, Some(flows), "test").unwrap()
    }

    #[test]
    fn hflip_twice_is_identity() {
        let clip = test_clip();
        let ops = AugmentOps { hflip: true, ..Default::default() };
        // Find a seed whose draw flips, then flip its output again.
        let mut seed = 0;
        let once = loop {
            let out = augment_clip(&clip, &ops, seed).unwrap();
            if out.frames[0].data() != clip.frames[0].data() {
                break out;
            }
            seed += 1;
        };
        let twice = loop {
            let out = augment_clip(&once, &ops, seed).unwrap();
            if out.frames[0].data() != once.frames[0].data() {
                break out;
            }
            seed += 1;
        };
        for t in 0..2 {
            assert_eq!(twice.frames[t].data(), clip.frames[t].data());
        }
        let f = &twice.gt_flows.as_ref().unwrap()[0];
        assert_eq!(f.u(5, 7), 3.0);
        assert_eq!(f.v(5, 7), 1.0);
    }

    #[test]
    fn hflip_negates_u_only() {
        let clip = test_clip();
        let ops = AugmentOps { hflip: true, ..Default::default() };
        let mut seed = 0;
        let flipped = loop {
            let out = augment_clip(&clip, &ops, seed).unwrap();
            if out.frames[0].data() != clip.frames[0].data() {
                break out;
            }
            seed += 1;
        };
        let f = &flipped.gt_flows.as_ref().unwrap()[0];
        assert_eq!(f.u(3, 4), -3.0);
        assert_eq!(f.v(3, 4), 1.0);
    }

    #[test]
    fn vflip_negates_v_only() {
        let clip = test_clip();
        let ops = AugmentOps { vflip: true, ..Default::default() };
        let mut seed = 0;
        let flipped = loop {
            let out = augment_clip(&clip, &ops, seed).unwrap();
            if out.frames[0].data() != clip.frames[0].data() {
                break out;
            }
            seed += 1;
        };
        let f = &flipped.gt_flows.as_ref().unwrap()[0];
        assert_eq!(f.u(3, 4), 3.0);
        assert_eq!(f.v(3, 4), -1.0);
    }

    #[test]
    fn double_scale_doubles_flow_values() {
        let clip = test_clip();
        let ops = AugmentOps {
            crop: Some((128, 128)),
            scale_range: Some((2.0, 2.0)),
            ..Default::default()
        };
        let out = augment_clip(&clip, &ops, 1).unwrap();
        assert_eq!(out.height(), 128);
        assert_eq!(out.width(), 128);
        let f = &out.gt_flows.as_ref().unwrap()[0];
        for y in [0, 63, 127] {
            for x in [0, 64, 127] {
                assert!((f.u(y, x) - 6.0).abs() < 1e-12);
                assert!((f.v(y, x) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn structure_preserved_and_divisibility_checked() {
        let clip = test_clip();
        let out = augment_clip(&clip, &AugmentOps { crop: Some((32, 64)), ..Default::default() }, 9).unwrap();
        assert_eq!(out.len(), clip.len());
        assert_eq!(out.gt_flows.as_ref().unwrap().len(), clip.len() - 1);
        assert_eq!((out.height(), out.width()), (32, 64));

        let err = augment_clip(&clip, &AugmentOps { crop: Some((20, 32)), ..Default::default() }, 0);
        assert!(matches!(err, Err(DataError::Indivisible { .. })));

        let err = augment_clip(&clip, &AugmentOps { crop: Some((128, 32)), ..Default::default() }, 0);
        assert!(matches!(err, Err(DataError::CropTooLarge { .. })));

        let err = augment_clip(
            &clip,
            &AugmentOps { scale_range: Some((0.9, 1.1)), ..Default::default() },
            0,
        );
        assert!(matches!(err, Err(DataError::ScaleNeedsCrop)));
    }

    #[test]
    fn same_seed_same_augmentation() {
        let clip = test_clip();
        let ops = AugmentOps {
            crop: Some((32, 32)),
            scale_range: Some((0.9, 1.1)),
            hflip: true,
            vflip: true,
        };
        let a = augment_clip(&clip, &ops, 77).unwrap();
        let b = augment_clip(&clip, &ops, 77).unwrap();
        for (fa, fb) in a.frames.iter().zip(b.frames.iter()) {
            assert_eq!(fa.data(), fb.data());
        }
    }
}
