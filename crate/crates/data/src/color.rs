//! Middlebury color-wheel flow visualization: hue encodes direction,
//! saturation encodes magnitude, zero flow is white.

use pcl_autodiff::{Scalar, Shape, Tensor};

use crate::flow::FlowField;

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;
const NCOLS: usize = RY + YG + GC + CB + BM + MR;

/// The published 55-entry wheel, including its integer-division ramps.
fn color_wheel() -> [[f64; 3]; NCOLS] {
    let mut wheel = [[0.0; 3]; NCOLS];
    let mut k = 0;
    let mut set = |r: usize, g: usize, b: usize, k: &mut usize| {
        wheel[*k] = [r as f64, g as f64, b as f64];
        *k += 1;
    };
    for i in 0..RY {
        set(255, 255 * i / RY, 0, &mut k);
    }
    for i in 0..YG {
        set(255 - 255 * i / YG, 255, 0, &mut k);
    }
    for i in 0..GC {
        set(0, 255, 255 * i / GC, &mut k);
    }
    for i in 0..CB {
        set(0, 255 - 255 * i / CB, 255, &mut k);
    }
    for i in 0..BM {
        set(255 * i / BM, 0, 255, &mut k);
    }
    for i in 0..MR {
        set(255, 0, 255 - 255 * i / MR, &mut k);
    }
    wheel
}

/// RGB in [0, 1] for a magnitude-normalized flow vector.
fn compute_color(fx: f64, fy: f64, wheel: &[[f64; 3]; NCOLS]) -> [f64; 3] {
    let rad = (fx * fx + fy * fy).sqrt();
    let a = (-fy).atan2(-fx) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (NCOLS - 1) as f64;
    let k0 = (fk.floor() as usize).min(NCOLS - 1);
    let k1 = (k0 + 1) % NCOLS;
    let f = fk - k0 as f64;
    let mut rgb = [0.0; 3];
    for (b, out) in rgb.iter_mut().enumerate() {
        let col0 = wheel[k0][b] / 255.0;
        let col1 = wheel[k1][b] / 255.0;
        let mut col = (1.0 - f) * col0 + f * col1;
        if rad <= 1.0 {
            col = 1.0 - rad * (1.0 - col);
        } else {
            col *= 0.75;
        }
        *out = col;
    }
    rgb
}

/// Render a flow field as an RGB image in [0, 1].
///
/// Magnitudes are normalized by `max_mag` when given, otherwise by the 99th
/// percentile magnitude of the field.
pub fn flow_to_color<T: Scalar>(flow: &FlowField<T>, max_mag: Option<f64>) -> Tensor<T> {
    let wheel = color_wheel();
    let norm = max_mag.unwrap_or_else(|| flow.magnitude_quantile(0.99)).max(1e-12);
    let (h, w) = (flow.height(), flow.width());
    let mut out = Tensor::zeros(Shape::new(1, 3, h, w));
    for y in 0..h {
        for x in 0..w {
            let fx = flow.u(y, x).into_f64() / norm;
            let fy = flow.v(y, x).into_f64() / norm;
            let rgb = compute_color(fx, fy, &wheel);
            for c in 0..3 {
                out.set(0, c, y, x, T::of(rgb[c]));
            }
        }
    }
    out
}
