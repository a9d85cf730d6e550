//! Plain-data compute kernels behind the tape ops.
//!
//! Loop orders are fixed so repeated runs produce bit-identical results.
//! Inner loops run over contiguous rows where possible.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> usize {
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * padding;
    if padded < span {
        0
    } else {
        (padded - span) / stride + 1
    }
}

pub struct ConvArgs {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    args: &ConvArgs,
) -> Tensor<T> {
    if args.stride == 1 {
        return conv2d_forward_s1(x, w, bias, args.padding, args.dilation);
    }
    let xs = x.shape();
    let ws = w.shape();
    let (c_out, c_in, kh, kw) = (ws.n, ws.c, ws.h, ws.w);
    let oh = conv_out_extent(xs.h, kh, args.stride, args.padding, args.dilation);
    let ow = conv_out_extent(xs.w, kw, args.stride, args.padding, args.dilation);
    let mut out = Tensor::zeros(Shape::new(xs.n, c_out, oh, ow));

    let (stride, pad, dil) = (args.stride, args.padding, args.dilation);
    for n in 0..xs.n {
        for oc in 0..c_out {
            let b = bias.map_or(T::zero(), |b| b.data()[oc]);
            for oy in 0..oh {
                // Accumulate one output row at a time.
                let row_start = out.shape().idx(n, oc, oy, 0);
                {
                    let out_row = &mut out.data_mut()[row_start..row_start + ow];
                    out_row.fill(b);
                }
                for ic in 0..c_in {
                    let x_plane = x.plane(n, ic);
                    for ky in 0..kh {
                        let iy = (oy * stride + ky * dil) as isize - pad as isize;
                        if iy < 0 || iy as usize >= xs.h {
                            continue;
                        }
                        let x_row = &x_plane[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                        let w_row_start = ws.idx(oc, ic, ky, 0);
                        let w_row = &w.data()[w_row_start..w_row_start + kw];
                        accumulate_conv_row(
                            &mut out.data_mut()[row_start..row_start + ow],
                            x_row,
                            w_row,
                            stride,
                            pad,
                            dil,
                        );
                    }
                }
            }
        }
    }
    out
}

/// Stride-1 geometry shared by the padded-plane fast paths.
///
/// Inputs are copied into zero-padded planes of pitch `wp`; outputs use the
/// same pitch, so one kernel tap becomes a single shifted saxpy/dot over the
/// whole plane. Columns beyond the true output width accumulate junk that the
/// strip step discards, and the trailing slack keeps tap-shifted reads in
/// bounds.
struct PlaneGeom {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    wp: usize,
    pad: usize,
    dil: usize,
    slack: usize,
}

impl PlaneGeom {
    fn new(xs: &Shape, k: usize, pad: usize, dil: usize) -> PlaneGeom {
        let oh = conv_out_extent(xs.h, k, 1, pad, dil);
        let ow = conv_out_extent(xs.w, k, 1, pad, dil);
        PlaneGeom {
            h: xs.h,
            w: xs.w,
            oh,
            ow,
            wp: xs.w + 2 * pad,
            pad,
            dil,
            slack: (k - 1) * dil + 1,
        }
    }

    fn padded_len(&self) -> usize {
        (self.h + 2 * self.pad) * self.wp + self.slack
    }

    fn out_len(&self) -> usize {
        self.oh * self.wp + self.slack
    }

    fn tap_offset(&self, ky: usize, kx: usize) -> usize {
        ky * self.dil * self.wp + kx * self.dil
    }

    /// Copy a dense H x W plane into the padded buffer (which must be zeroed
    /// or stale-but-overwritten in the interior; borders stay zero).
    fn fill_padded<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        for y in 0..self.h {
            let d = (y + self.pad) * self.wp + self.pad;
            dst[d..d + self.w].copy_from_slice(&src[y * self.w..(y + 1) * self.w]);
        }
    }

    /// Copy dense OH x OW rows into a pitch-`wp` buffer, leaving junk columns
    /// zero.
    fn fill_pitched<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        for y in 0..self.oh {
            let d = y * self.wp;
            dst[d..d + self.ow].copy_from_slice(&src[y * self.ow..(y + 1) * self.ow]);
        }
    }

    fn strip<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        for y in 0..self.oh {
            let s = y * self.wp;
            dst[y * self.ow..(y + 1) * self.ow].copy_from_slice(&src[s..s + self.ow]);
        }
    }

    /// Strip the interior of a padded input-geometry buffer back to H x W.
    fn strip_padded<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        for y in 0..self.h {
            let s = (y + self.pad) * self.wp + self.pad;
            dst[y * self.w..(y + 1) * self.w].copy_from_slice(&src[s..s + self.w]);
        }
    }
}

#[inline]
fn saxpy<T: Scalar>(dst: &mut [T], src: &[T], factor: T) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += factor * *s;
    }
}

fn conv2d_forward_s1<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    pad: usize,
    dil: usize,
) -> Tensor<T> {
    let xs = x.shape();
    let ws = w.shape();
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let g = PlaneGeom::new(&xs, k, pad, dil);
    let mut out = Tensor::zeros(Shape::new(xs.n, c_out, g.oh, g.ow));

    let mut padded = vec![T::zero(); g.padded_len() * c_in];
    let mut acc = vec![T::zero(); g.out_len()];
    let span = g.oh * g.wp;
    for n in 0..xs.n {
        for ic in 0..c_in {
            g.fill_padded(x.plane(n, ic), &mut padded[ic * g.padded_len()..(ic + 1) * g.padded_len()]);
        }
        for oc in 0..c_out {
            acc.fill(bias.map_or(T::zero(), |b| b.data()[oc]));
            for ic in 0..c_in {
                let xp = &padded[ic * g.padded_len()..(ic + 1) * g.padded_len()];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w.at(oc, ic, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let off = g.tap_offset(ky, kx);
                        saxpy(&mut acc[..span], &xp[off..off + span], wv);
                    }
                }
            }
            g.strip(&acc, out.plane_mut(n, oc));
        }
    }
    out
}

/// out_row[ox] += sum_kx w_row[kx] * x_row[ox*stride + kx*dil - pad], skipping
/// out-of-range taps. Split per-tap so the stride-1 case becomes a saxpy over
/// a contiguous span.
#[inline]
fn accumulate_conv_row<T: Scalar>(
    out_row: &mut [T],
    x_row: &[T],
    w_row: &[T],
    stride: usize,
    pad: usize,
    dil: usize,
) {
    let ow = out_row.len();
    let iw = x_row.len();
    for (kx, &wv) in w_row.iter().enumerate() {
        if wv == T::zero() {
            // Common for zero-initialized prediction heads.
            continue;
        }
        let off = (kx * dil) as isize - pad as isize;
        // Valid ox range: 0 <= ox*stride + off < iw
        let ox_lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
        let ox_hi_excl = {
            let lim = iw as isize - off; // need ox*stride < lim
            if lim <= 0 {
                0
            } else {
                (((lim - 1) as usize) / stride + 1).min(ow)
            }
        };
        if ox_lo >= ox_hi_excl {
            continue;
        }
        if stride == 1 {
            let src = &x_row[(ox_lo as isize + off) as usize..(ox_hi_excl as isize - 1 + off) as usize + 1];
            let dst = &mut out_row[ox_lo..ox_hi_excl];
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d += wv * s;
            }
        } else {
            for ox in ox_lo..ox_hi_excl {
                let ix = (ox * stride) as isize + off;
                out_row[ox] += wv * x_row[ix as usize];
            }
        }
    }
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

/// Dot product over 8 independent accumulator lanes. The lane split is fixed,
/// so results are bit-identical across runs; plain sequential summation would
/// serialize on the float dependency chain and never vectorize.
#[inline]
fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    let (a8, a_tail) = a.split_at(chunks * 8);
    let (b8, b_tail) = b.split_at(chunks * 8);
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for i in 0..8 {
            lanes[i] += ca[i] * cb[i];
        }
    }
    let mut acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (x, y) in a_tail.iter().zip(b_tail.iter()) {
        acc += *x * *y;
    }
    acc
}

fn conv2d_backward_s1<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    pad: usize,
    dil: usize,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads<T> {
    let xs = x.shape();
    let ws = w.shape();
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let g = PlaneGeom::new(&xs, k, pad, dil);
    let span = g.oh * g.wp;

    let mut dx = need_dx.then(|| Tensor::zeros(xs));
    let mut dw = need_dw.then(|| Tensor::zeros(ws));
    let mut db = need_db.then(|| Tensor::zeros(Shape::new(1, c_out, 1, 1)));

    let mut padded_x = vec![T::zero(); if need_dw { g.padded_len() * c_in } else { 0 }];
    let mut pitched_dy = vec![T::zero(); g.out_len() * c_out];
    let mut dxp = vec![T::zero(); if need_dx { g.padded_len() } else { 0 }];

    for n in 0..xs.n {
        for oc in 0..c_out {
            let plane = dy.plane(n, oc);
            g.fill_pitched(plane, &mut pitched_dy[oc * g.out_len()..(oc + 1) * g.out_len()]);
            if let Some(db) = db.as_mut() {
                let s: T = plane.iter().copied().sum();
                db.data_mut()[oc] += s;
            }
        }
        if need_dw {
            for ic in 0..c_in {
                g.fill_padded(
                    x.plane(n, ic),
                    &mut padded_x[ic * g.padded_len()..(ic + 1) * g.padded_len()],
                );
            }
        }
        for ic in 0..c_in {
            if need_dx {
                dxp.fill(T::zero());
            }
            for oc in 0..c_out {
                let dyp = &pitched_dy[oc * g.out_len()..oc * g.out_len() + span];
                for ky in 0..k {
                    for kx in 0..k {
                        let off = g.tap_offset(ky, kx);
                        if let Some(dw) = dw.as_mut() {
                            let xp = &padded_x[ic * g.padded_len()..(ic + 1) * g.padded_len()];
                            dw.data_mut()[ws.idx(oc, ic, ky, kx)] += dot_lanes(dyp, &xp[off..off + span]);
                        }
                        if need_dx {
                            let wv = w.at(oc, ic, ky, kx);
                            if wv != T::zero() {
                                saxpy(&mut dxp[off..off + span], dyp, wv);
                            }
                        }
                    }
                }
            }
            if let Some(dx) = dx.as_mut() {
                g.strip_padded(&dxp, dx.plane_mut(n, ic));
            }
        }
    }
    ConvGrads { dx, dw, db }
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    args: &ConvArgs,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads<T> {
    if args.stride == 1 {
        return conv2d_backward_s1(x, w, dy, args.padding, args.dilation, need_dx, need_dw, need_db);
    }
    let xs = x.shape();
    let ws = w.shape();
    let ys = dy.shape();
    let (c_out, c_in, kh, kw) = (ws.n, ws.c, ws.h, ws.w);
    let (stride, pad, dil) = (args.stride, args.padding, args.dilation);

    let mut dx = need_dx.then(|| Tensor::zeros(xs));
    let mut dw = need_dw.then(|| Tensor::zeros(ws));
    let mut db = need_db.then(|| Tensor::zeros(Shape::new(1, c_out, 1, 1)));

    for n in 0..xs.n {
        for oc in 0..c_out {
            let dy_plane_start = ys.idx(n, oc, 0, 0);
            for oy in 0..ys.h {
                let dy_row = &dy.data()[dy_plane_start + oy * ys.w..dy_plane_start + (oy + 1) * ys.w];
                if let Some(db) = db.as_mut() {
                    let s: T = dy_row.iter().copied().sum();
                    db.data_mut()[oc] += s;
                }
                if !need_dx && !need_dw {
                    continue;
                }
                for ic in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky * dil) as isize - pad as isize;
                        if iy < 0 || iy as usize >= xs.h {
                            continue;
                        }
                        let iy = iy as usize;
                        let x_row_start = xs.idx(n, ic, iy, 0);
                        for kx in 0..kw {
                            let off = (kx * dil) as isize - pad as isize;
                            let ox_lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
                            let ox_hi_excl = {
                                let lim = xs.w as isize - off;
                                if lim <= 0 {
                                    0
                                } else {
                                    (((lim - 1) as usize) / stride + 1).min(ys.w)
                                }
                            };
                            if ox_lo >= ox_hi_excl {
                                continue;
                            }
                            if let Some(dw) = dw.as_mut() {
                                let x_data = x.data();
                                let acc = if stride == 1 {
                                    let src = &x_data[(x_row_start as isize + ox_lo as isize + off) as usize
                                        ..(x_row_start as isize + ox_hi_excl as isize + off) as usize];
                                    dot_lanes(&dy_row[ox_lo..ox_hi_excl], src)
                                } else {
                                    let mut acc = T::zero();
                                    for ox in ox_lo..ox_hi_excl {
                                        let ix = (ox * stride) as isize + off;
                                        acc += dy_row[ox] * x_data[x_row_start + ix as usize];
                                    }
                                    acc
                                };
                                dw.data_mut()[ws.idx(oc, ic, ky, kx)] += acc;
                            }
                            if let Some(dx) = dx.as_mut() {
                                let wv = w.data()[ws.idx(oc, ic, ky, kx)];
                                if wv == T::zero() {
                                    continue;
                                }
                                let dx_row_start = xs.idx(n, ic, iy, 0);
                                let dx_data = dx.data_mut();
                                if stride == 1 {
                                    let dst = &mut dx_data[(dx_row_start as isize + ox_lo as isize + off) as usize
                                        ..(dx_row_start as isize + ox_hi_excl as isize + off) as usize];
                                    for (d, &g) in dst.iter_mut().zip(dy_row[ox_lo..ox_hi_excl].iter()) {
                                        *d += wv * g;
                                    }
                                } else {
                                    for ox in ox_lo..ox_hi_excl {
                                        let ix = (ox * stride) as isize + off;
                                        dx_data[dx_row_start + ix as usize] += wv * dy_row[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads { dx, dw, db }
}

pub fn avg_pool_forward<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Tensor<T> {
    let xs = x.shape();
    let oh = pooled_extent(xs.h, window, stride);
    let ow = pooled_extent(xs.w, window, stride);
    let inv = T::of(1.0 / (window * window) as f64);
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
    for n in 0..xs.n {
        for c in 0..xs.c {
            let plane = x.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ky in 0..window {
                        let row = &plane[(oy * stride + ky) * xs.w + ox * stride..];
                        for kx in 0..window {
                            acc += row[kx];
                        }
                    }
                    out_plane[oy * ow + ox] = acc * inv;
                }
            }
        }
    }
    out
}

/// Trailing partial windows are dropped.
pub fn pooled_extent(input: usize, window: usize, stride: usize) -> usize {
    if input < window {
        0
    } else {
        (input - window) / stride + 1
    }
}

pub fn avg_pool_backward<T: Scalar>(x_shape: Shape, dy: &Tensor<T>, window: usize, stride: usize) -> Tensor<T> {
    let ys = dy.shape();
    let inv = T::of(1.0 / (window * window) as f64);
    let mut dx = Tensor::zeros(x_shape);
    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            let dy_plane_start = ys.idx(n, c, 0, 0);
            let dx_plane = dx.plane_mut(n, c);
            for oy in 0..ys.h {
                for ox in 0..ys.w {
                    let g = dy.data()[dy_plane_start + oy * ys.w + ox] * inv;
                    for ky in 0..window {
                        let base = (oy * stride + ky) * x_shape.w + ox * stride;
                        for kx in 0..window {
                            dx_plane[base + kx] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Window boundaries for adaptive pooling / nearest tiling: bin `i` of `b`
/// covers [round(i*extent/b), round((i+1)*extent/b)), guarded to stay
/// non-empty when the output is finer than the input.
pub fn adaptive_bounds(extent: usize, bins: usize, i: usize) -> (usize, usize) {
    let r = |k: usize| ((k * extent) as f64 / bins as f64).round() as usize;
    let start = r(i).min(extent - 1);
    let end = r(i + 1).clamp(start + 1, extent);
    (start, end)
}

pub fn adaptive_avg_pool_forward<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let xs = x.shape();
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, out_h, out_w));
    for n in 0..xs.n {
        for c in 0..xs.c {
            let plane = x.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for oy in 0..out_h {
                let (y0, y1) = adaptive_bounds(xs.h, out_h, oy);
                for ox in 0..out_w {
                    let (x0, x1) = adaptive_bounds(xs.w, out_w, ox);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += plane[y * xs.w + x];
                        }
                    }
                    let count = T::of(((y1 - y0) * (x1 - x0)) as f64);
                    out_plane[oy * out_w + ox] = acc / count;
                }
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward<T: Scalar>(x_shape: Shape, dy: &Tensor<T>) -> Tensor<T> {
    let ys = dy.shape();
    let mut dx = Tensor::zeros(x_shape);
    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            let dy_start = ys.idx(n, c, 0, 0);
            let dx_plane = dx.plane_mut(n, c);
            for oy in 0..ys.h {
                let (y0, y1) = adaptive_bounds(x_shape.h, ys.h, oy);
                for ox in 0..ys.w {
                    let (x0, x1) = adaptive_bounds(x_shape.w, ys.w, ox);
                    let count = T::of(((y1 - y0) * (x1 - x0)) as f64);
                    let g = dy.data()[dy_start + oy * ys.w + ox] / count;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            dx_plane[y * x_shape.w + x] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Nearest tiling: output cell (oy, ox) copies the source bin whose adaptive
/// window contains it. Inverse of `adaptive_avg_pool` on constants.
pub fn tile_nearest_forward<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let xs = x.shape();
    let y_of = tile_source_map(out_h, xs.h);
    let x_of = tile_source_map(out_w, xs.w);
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, out_h, out_w));
    for n in 0..xs.n {
        for c in 0..xs.c {
            let plane = x.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for oy in 0..out_h {
                let src_row = &plane[y_of[oy] * xs.w..(y_of[oy] + 1) * xs.w];
                for ox in 0..out_w {
                    out_plane[oy * out_w + ox] = src_row[x_of[ox]];
                }
            }
        }
    }
    out
}

/// For each output index, the source bin index, matching `adaptive_bounds`.
fn tile_source_map(out_extent: usize, bins: usize) -> Vec<usize> {
    let mut map = vec![0usize; out_extent];
    for b in 0..bins {
        let (lo, hi) = adaptive_bounds(out_extent, bins, b);
        for m in map.iter_mut().take(hi).skip(lo) {
            *m = b;
        }
    }
    map
}

pub fn tile_nearest_backward<T: Scalar>(x_shape: Shape, dy: &Tensor<T>) -> Tensor<T> {
    let ys = dy.shape();
    let y_of = tile_source_map(ys.h, x_shape.h);
    let x_of = tile_source_map(ys.w, x_shape.w);
    let mut dx = Tensor::zeros(x_shape);
    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            let dy_start = ys.idx(n, c, 0, 0);
            let dx_plane = dx.plane_mut(n, c);
            for oy in 0..ys.h {
                let row = &dy.data()[dy_start + oy * ys.w..dy_start + (oy + 1) * ys.w];
                let ty = y_of[oy];
                for (ox, &g) in row.iter().enumerate() {
                    dx_plane[ty * x_shape.w + x_of[ox]] += g;
                }
            }
        }
    }
    dx
}

/// Source coordinate for 2x bilinear upsampling, align-corners = false:
/// src = (dst + 0.5)/2 - 0.5, clamped to the image.
#[inline]
fn up2_src(dst: usize, src_extent: usize) -> (usize, usize, f64) {
    let s = (dst as f64 + 0.5) / 2.0 - 0.5;
    let s = s.clamp(0.0, (src_extent - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_extent - 1);
    (i0, i1, s - i0 as f64)
}

pub fn upsample2x_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let xs = x.shape();
    let (oh, ow) = (xs.h * 2, xs.w * 2);
    let ymap: Vec<_> = (0..oh).map(|d| up2_src(d, xs.h)).collect();
    let xmap: Vec<_> = (0..ow).map(|d| up2_src(d, xs.w)).collect();
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
    for n in 0..xs.n {
        for c in 0..xs.c {
            let plane = x.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for oy in 0..oh {
                let (y0, y1, fy) = ymap[oy];
                let fy = T::of(fy);
                let r0 = &plane[y0 * xs.w..(y0 + 1) * xs.w];
                let r1 = &plane[y1 * xs.w..(y1 + 1) * xs.w];
                for ox in 0..ow {
                    let (x0, x1, fx) = xmap[ox];
                    let fx = T::of(fx);
                    let top = r0[x0] + fx * (r0[x1] - r0[x0]);
                    let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                    out_plane[oy * ow + ox] = top + fy * (bot - top);
                }
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Scalar>(x_shape: Shape, dy: &Tensor<T>) -> Tensor<T> {
    let ys = dy.shape();
    let ymap: Vec<_> = (0..ys.h).map(|d| up2_src(d, x_shape.h)).collect();
    let xmap: Vec<_> = (0..ys.w).map(|d| up2_src(d, x_shape.w)).collect();
    let mut dx = Tensor::zeros(x_shape);
    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            let dy_start = ys.idx(n, c, 0, 0);
            let dx_plane = dx.plane_mut(n, c);
            for oy in 0..ys.h {
                let (y0, y1, fy) = ymap[oy];
                for ox in 0..ys.w {
                    let (x0, x1, fx) = xmap[ox];
                    let g = dy.data()[dy_start + oy * ys.w + ox];
                    let (wy0, wy1) = (T::of(1.0 - fy), T::of(fy));
                    let (wx0, wx1) = (T::of(1.0 - fx), T::of(fx));
                    dx_plane[y0 * x_shape.w + x0] += g * wy0 * wx0;
                    dx_plane[y0 * x_shape.w + x1] += g * wy0 * wx1;
                    dx_plane[y1 * x_shape.w + x0] += g * wy1 * wx0;
                    dx_plane[y1 * x_shape.w + x1] += g * wy1 * wx1;
                }
            }
        }
    }
    dx
}

/// Backward-warp sample of `image` at (x + u, y + v) with border clamp.
///
/// Coordinates that land outside the image are clamped; the clamp also zeroes
/// the flow gradient there (moving the flow further out changes nothing).
pub fn warp_forward<T: Scalar>(image: &Tensor<T>, flow: &Tensor<T>) -> Tensor<T> {
    let is = image.shape();
    let mut out = Tensor::zeros(is);
    for n in 0..is.n {
        let u_plane = flow.plane(n, 0);
        let v_plane = flow.plane(n, 1);
        for c in 0..is.c {
            let plane = image.plane(n, c);
            let out_plane = out.plane_mut(n, c);
            for y in 0..is.h {
                for x in 0..is.w {
                    let u = u_plane[y * is.w + x].into_f64();
                    let v = v_plane[y * is.w + x].into_f64();
                    let sx = (x as f64 + u).clamp(0.0, (is.w - 1) as f64);
                    let sy = (y as f64 + v).clamp(0.0, (is.h - 1) as f64);
                    let x0 = sx.floor() as usize;
                    let y0 = sy.floor() as usize;
                    let x1 = (x0 + 1).min(is.w - 1);
                    let y1 = (y0 + 1).min(is.h - 1);
                    let fx = T::of(sx - x0 as f64);
                    let fy = T::of(sy - y0 as f64);
                    let v00 = plane[y0 * is.w + x0];
                    let v01 = plane[y0 * is.w + x1];
                    let v10 = plane[y1 * is.w + x0];
                    let v11 = plane[y1 * is.w + x1];
                    let top = v00 + fx * (v01 - v00);
                    let bot = v10 + fx * (v11 - v10);
                    out_plane[y * is.w + x] = top + fy * (bot - top);
                }
            }
        }
    }
    out
}

pub fn warp_backward<T: Scalar>(
    image: &Tensor<T>,
    flow: &Tensor<T>,
    dy: &Tensor<T>,
    need_dimage: bool,
    need_dflow: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let is = image.shape();
    let mut dimage = need_dimage.then(|| Tensor::zeros(is));
    let mut dflow = need_dflow.then(|| Tensor::zeros(flow.shape()));
    let w_max = (is.w - 1) as f64;
    let h_max = (is.h - 1) as f64;
    for n in 0..is.n {
        let u_plane = flow.plane(n, 0).to_vec();
        let v_plane = flow.plane(n, 1).to_vec();
        for c in 0..is.c {
            let plane = image.plane(n, c).to_vec();
            let dy_start = dy.shape().idx(n, c, 0, 0);
            for y in 0..is.h {
                for x in 0..is.w {
                    let g = dy.data()[dy_start + y * is.w + x];
                    if g == T::zero() {
                        continue;
                    }
                    let u = u_plane[y * is.w + x].into_f64();
                    let v = v_plane[y * is.w + x].into_f64();
                    let rx = x as f64 + u;
                    let ry = y as f64 + v;
                    let sx = rx.clamp(0.0, w_max);
                    let sy = ry.clamp(0.0, h_max);
                    let x0 = sx.floor() as usize;
                    let y0 = sy.floor() as usize;
                    let x1 = (x0 + 1).min(is.w - 1);
                    let y1 = (y0 + 1).min(is.h - 1);
                    let fx = sx - x0 as f64;
                    let fy = sy - y0 as f64;
                    if let Some(dimage) = dimage.as_mut() {
                        let base = dimage.shape().idx(n, c, 0, 0);
                        let d = dimage.data_mut();
                        d[base + y0 * is.w + x0] += g * T::of((1.0 - fy) * (1.0 - fx));
                        d[base + y0 * is.w + x1] += g * T::of((1.0 - fy) * fx);
                        d[base + y1 * is.w + x0] += g * T::of(fy * (1.0 - fx));
                        d[base + y1 * is.w + x1] += g * T::of(fy * fx);
                    }
                    if let Some(dflow) = dflow.as_mut() {
                        let v00 = plane[y0 * is.w + x0].into_f64();
                        let v01 = plane[y0 * is.w + x1].into_f64();
                        let v10 = plane[y1 * is.w + x0].into_f64();
                        let v11 = plane[y1 * is.w + x1].into_f64();
                        let dval_dsx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
                        let dval_dsy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01);
                        let gx = if rx > 0.0 && rx < w_max { dval_dsx } else { 0.0 };
                        let gy = if ry > 0.0 && ry < h_max { dval_dsy } else { 0.0 };
                        let fs = dflow.shape();
                        let iu = fs.idx(n, 0, y, x);
                        let iv = fs.idx(n, 1, y, x);
                        let d = dflow.data_mut();
                        d[iu] += g * T::of(gx);
                        d[iv] += g * T::of(gy);
                    }
                }
            }
        }
    }
    (dimage, dflow)
}
