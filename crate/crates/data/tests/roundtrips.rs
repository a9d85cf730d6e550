//! Property tests: file-format round trips and augmentation structure.

use pcl_autodiff::{Shape, Tensor};
use pcl_data::{augment_clip, read_flo, read_ppm, write_flo, write_ppm, AugmentOps, Clip, FlowField};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flo_roundtrip_any_field(
        w in 1usize..20,
        h in 1usize..20,
        seed in 0u32..1000,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let field = FlowField::<f32>::from_fn(h, w, |y, x| {
            let k = (seed as usize + y * w + x) as f64;
            ((k * 0.7).sin() * 40.0, (k * 1.3).cos() * 40.0)
        });
        write_flo(&path, &field).unwrap();
        let back = read_flo::<f32>(&path).unwrap();
        prop_assert_eq!(back.width(), w);
        prop_assert_eq!(back.height(), h);
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(field.u(y, x).to_bits(), back.u(y, x).to_bits());
                prop_assert_eq!(field.v(y, x).to_bits(), back.v(y, x).to_bits());
            }
        }
    }

    #[test]
    fn ppm_roundtrip_quantized(
        w in 1usize..16,
        h in 1usize..16,
        seed in 0u32..1000,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.ppm");
        let img = Tensor::<f64>::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
            ((seed as usize * 7 + c * 89 + y * 31 + x * 13) % 256) as f64 / 255.0
        });
        write_ppm(&path, &img).unwrap();
        let back = read_ppm::<f64>(&path).unwrap();
        prop_assert!(img.max_abs_diff(&back) == 0.0);
    }

    #[test]
    fn augmentation_preserves_clip_structure(
        l in 2usize..6,
        seed in 0u64..500,
        hflip in any::<bool>(),
        vflip in any::<bool>(),
    ) {
        let frames: Vec<_> = (0..l)
            .map(|t| Tensor::<f64>::from_fn(Shape::new(1, 3, 64, 64), |_, c, y, x| {
                (((t * 3 + c) * 64 + y) * 64 + x) as f64 / 40_000.0
            }))
            .collect();
        let flows = vec![FlowField::constant(64, 64, 1.5, -2.0); l - 1];
        let clip = Clip::new(frames, Some(flows), "prop").unwrap();
        let ops = AugmentOps {
            crop: Some((32, 32)),
            scale_range: Some((0.9, 1.1)),
            hflip,
            vflip,
        };
        let out = augment_clip(&clip, &ops, seed).unwrap();
        prop_assert_eq!(out.len(), l);
        prop_assert_eq!(out.gt_flows.as_ref().unwrap().len(), l - 1);
        prop_assert_eq!(out.height() % 32, 0);
        prop_assert_eq!(out.width() % 32, 0);
    }
}
