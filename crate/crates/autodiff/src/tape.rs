use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::AdError;
use crate::kernels::{self, ConvArgs};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape_id: u64,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, bias: Option<Var>, stride: usize, padding: usize, dilation: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    Scale { x: Var, factor: T },
    AddScalar { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    LeakyRelu { x: Var, slope: T },
    Sqrt { x: Var },
    Ln { x: Var },
    Powf { x: Var, exponent: T },
    AvgPool { x: Var, window: usize, stride: usize },
    AdaptiveAvgPool { x: Var },
    TileNearest { x: Var },
    Upsample2xBilinear { x: Var },
    ConcatChannels { xs: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    MulChannel { x: Var, weight: Var },
    WarpBilinear { image: Var, flow: Var },
    SumAll { x: Var },
    MeanAll { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded forward computation. Nodes are appended in execution order and
/// replayed in reverse by [`Tape::backward`].
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    tape_id: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`, if any reached it. Leaves created with
    /// `requires_grad = false` and nodes off the loss path return `None`.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        assert_eq!(var.tape_id, self.tape_id, "Var used with gradients of a different tape");
        self.grads[var.idx].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        assert_eq!(var.tape_id, self.tape_id, "Var used with gradients of a different tape");
        self.grads[var.idx].take()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor. Gradients flow into it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Input that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.node(var).value
    }

    pub fn shape(&self, var: Var) -> Shape {
        self.node(var).value.shape()
    }

    fn node(&self, var: Var) -> &Node<T> {
        assert_eq!(var.tape_id, self.id, "Var used on a different tape");
        &self.nodes[var.idx]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var { idx: self.nodes.len() - 1, tape_id: self.id }
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.node(*v).needs_grad);
        self.push(value, op, needs)
    }

    // ---- convolution ------------------------------------------------------

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var, AdError> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if stride < 1 || dilation < 1 {
            return Err(AdError::arg("conv2d", format!("stride {stride} and dilation {dilation} must be >= 1")));
        }
        if xs.c != ws.c {
            return Err(AdError::shape(
                "conv2d",
                format!("input channels {} != kernel input channels {}", xs.c, ws.c),
            ));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != Shape::new(1, ws.n, 1, 1) {
                return Err(AdError::shape(
                    "conv2d",
                    format!("bias shape {} must be 1x{}x1x1", bs, ws.n),
                ));
            }
        }
        let oh = kernels::conv_out_extent(xs.h, ws.h, stride, padding, dilation);
        let ow = kernels::conv_out_extent(xs.w, ws.w, stride, padding, dilation);
        if oh == 0 || ow == 0 {
            return Err(AdError::shape(
                "conv2d",
                format!("kernel {}x{} (dilation {dilation}) exceeds padded input {}x{}", ws.h, ws.w, xs.h, xs.w),
            ));
        }
        let args = ConvArgs { stride, padding, dilation };
        let out = {
            let bt = bias.map(|b| self.value(b));
            kernels::conv2d_forward(self.value(x), self.value(w), bt, &args)
        };
        let mut inputs = vec![x, w];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Ok(self.push_op(out, Op::Conv2d { x, w, bias, stride, padding, dilation }, &inputs))
    }

    // ---- elementwise ------------------------------------------------------

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, AdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AdError::shape(name, format!("lhs {} vs rhs {}", sa, sb)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(sa, data).expect("shape preserved");
        Ok(self.push_op(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div { a, b })
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(x).map(f);
        self.push_op(out, op, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let factor = T::of(factor);
        self.unary(x, |v| v * factor, Op::Scale { x, factor })
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Var {
        let offset = T::of(offset);
        self.unary(x, |v| v + offset, Op::AddScalar { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::of(slope);
        self.unary(x, |v| if v > T::zero() { v } else { v * slope }, Op::LeakyRelu { x, slope })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sqrt(), Op::Sqrt { x })
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), Op::Ln { x })
    }

    pub fn powf(&mut self, x: Var, exponent: f64) -> Var {
        let exponent = T::of(exponent);
        self.unary(x, |v| v.powf(exponent), Op::Powf { x, exponent })
    }

    // ---- spatial ----------------------------------------------------------

    pub fn avg_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var, AdError> {
        if window < 1 || stride < 1 {
            return Err(AdError::arg("avg_pool2d", format!("window {window} and stride {stride} must be >= 1")));
        }
        let xs = self.shape(x);
        if kernels::pooled_extent(xs.h, window, stride) == 0 || kernels::pooled_extent(xs.w, window, stride) == 0 {
            return Err(AdError::shape("avg_pool2d", format!("window {window} exceeds input {}x{}", xs.h, xs.w)));
        }
        let out = kernels::avg_pool_forward(self.value(x), window, stride);
        Ok(self.push_op(out, Op::AvgPool { x, window, stride }, &[x]))
    }

    /// Mean-pool to an arbitrary target grid; window boundaries are rounded
    /// and duplicated when the target is finer than the input.
    pub fn adaptive_avg_pool(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var, AdError> {
        if out_h < 1 || out_w < 1 {
            return Err(AdError::arg("adaptive_avg_pool", format!("target {out_h}x{out_w} must be >= 1x1")));
        }
        let out = kernels::adaptive_avg_pool_forward(self.value(x), out_h, out_w);
        Ok(self.push_op(out, Op::AdaptiveAvgPool { x }, &[x]))
    }

    /// Nearest-neighbor tiling to an arbitrary target grid.
    pub fn tile_nearest(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var, AdError> {
        if out_h < 1 || out_w < 1 {
            return Err(AdError::arg("tile_nearest", format!("target {out_h}x{out_w} must be >= 1x1")));
        }
        let out = kernels::tile_nearest_forward(self.value(x), out_h, out_w);
        Ok(self.push_op(out, Op::TileNearest { x }, &[x]))
    }

    /// Doubles H and W, bilinear, align-corners = false.
    pub fn upsample2x_bilinear(&mut self, x: Var) -> Var {
        let out = kernels::upsample2x_forward(self.value(x));
        self.push_op(out, Op::Upsample2xBilinear { x }, &[x])
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, AdError> {
        if xs.is_empty() {
            return Err(AdError::arg("concat_channels", "empty input list"));
        }
        let first = self.shape(xs[0]);
        let mut c_total = 0;
        for (i, &v) in xs.iter().enumerate() {
            let s = self.shape(v);
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(AdError::shape(
                    "concat_channels",
                    format!("input {i} is {}, expected batch/spatial {}x_x{}x{}", s, first.n, first.h, first.w),
                ));
            }
            c_total += s.c;
        }
        let shape = Shape::new(first.n, c_total, first.h, first.w);
        let mut out = Tensor::zeros(shape);
        for n in 0..first.n {
            let mut c_off = 0;
            for &v in xs {
                let t = self.value(v);
                let sc = t.shape().c;
                for c in 0..sc {
                    let src = t.plane(n, c);
                    let start = shape.idx(n, c_off + c, 0, 0);
                    out.data_mut()[start..start + src.len()].copy_from_slice(src);
                }
                c_off += sc;
            }
        }
        Ok(self.push_op(out, Op::ConcatChannels { xs: xs.to_vec() }, xs))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, count: usize) -> Result<Var, AdError> {
        let xs = self.shape(x);
        if start + count > xs.c || count == 0 {
            return Err(AdError::arg(
                "slice_channels",
                format!("range {start}..{} out of {} channels", start + count, xs.c),
            ));
        }
        let shape = Shape::new(xs.n, count, xs.h, xs.w);
        let mut out = Tensor::zeros(shape);
        for n in 0..xs.n {
            for c in 0..count {
                let src = self.value(x).plane(n, start + c);
                let dst_start = shape.idx(n, c, 0, 0);
                out.data_mut()[dst_start..dst_start + src.len()].copy_from_slice(src);
            }
        }
        Ok(self.push_op(out, Op::SliceChannels { x, start }, &[x]))
    }

    /// Hadamard product with a per-channel weight of shape 1xCx1x1.
    pub fn mul_channel(&mut self, x: Var, weight: Var) -> Result<Var, AdError> {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        if ws != Shape::new(1, xs.c, 1, 1) {
            return Err(AdError::shape("mul_channel", format!("weight {} must be 1x{}x1x1", ws, xs.c)));
        }
        let mut out = Tensor::zeros(xs);
        for n in 0..xs.n {
            for c in 0..xs.c {
                let wv = self.value(weight).data()[c];
                let src = self.value(x).plane(n, c);
                let dst_start = xs.idx(n, c, 0, 0);
                for (d, &s) in out.data_mut()[dst_start..dst_start + src.len()].iter_mut().zip(src) {
                    *d = s * wv;
                }
            }
        }
        Ok(self.push_op(out, Op::MulChannel { x, weight }, &[x, weight]))
    }

    /// Backward warp: output(x, y) samples `image` at (x + u, y + v).
    pub fn warp_bilinear(&mut self, image: Var, flow: Var) -> Result<Var, AdError> {
        let is = self.shape(image);
        let fs = self.shape(flow);
        if fs.c != 2 {
            return Err(AdError::shape("warp_bilinear", format!("flow has {} channels, expected 2 (u, v)", fs.c)));
        }
        if (fs.n, fs.h, fs.w) != (is.n, is.h, is.w) {
            return Err(AdError::shape(
                "warp_bilinear",
                format!("flow {} does not match image {} on batch/spatial dims", fs, is),
            ));
        }
        let out = kernels::warp_forward(self.value(image), self.value(flow));
        Ok(self.push_op(out, Op::WarpBilinear { image, flow }, &[image, flow]))
    }

    // ---- reductions -------------------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push_op(Tensor::scalar(s), Op::SumAll { x }, &[x])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::of(t.numel() as f64);
        self.push_op(Tensor::scalar(m), Op::MeanAll { x }, &[x])
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss. Gradients are retained for leaves the
    /// loss reaches (with `requires_grad` set); interior buffers are released
    /// as soon as they have been propagated, to bound peak memory.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AdError> {
        assert_eq!(loss.tape_id, self.id, "loss Var from a different tape");
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(AdError::NonScalarLoss(ls));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.idx] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.idx).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.visit_backward(i, &g, &mut grads);
        }
        Ok(Gradients { tape_id: self.id, grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], var: Var, contribution: Tensor<T>) {
        if !self.nodes[var.idx].needs_grad {
            return;
        }
        match &mut grads[var.idx] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                    *e += *c;
                }
            }
            slot => *slot = Some(contribution),
        }
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.idx].needs_grad
    }

    fn visit_backward(&self, idx: usize, g: &Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, bias, stride, padding, dilation } => {
                let args = ConvArgs { stride: *stride, padding: *padding, dilation: *dilation };
                let need_db = bias.map(|b| self.needs(b)).unwrap_or(false);
                let res = kernels::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    &args,
                    self.needs(*x),
                    self.needs(*w),
                    need_db,
                );
                if let Some(dx) = res.dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = res.dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(db), Some(b)) = (res.db, bias) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    let da = zip_tensors(g, self.value(*b), |g, b| g * b);
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let db = zip_tensors(g, self.value(*a), |g, a| g * a);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Div { a, b } => {
                if self.needs(*a) {
                    let da = zip_tensors(g, self.value(*b), |g, b| g / b);
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let bt = self.value(*b);
                    let at = self.value(*a);
                    let mut db = Tensor::zeros(bt.shape());
                    for ((d, &gv), (&av, &bv)) in db
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(at.data().iter().zip(bt.data()))
                    {
                        *d = -gv * av / (bv * bv);
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Scale { x, factor } => {
                let f = *factor;
                self.accumulate(grads, *x, g.map(|v| v * f));
            }
            Op::AddScalar { x } => {
                self.accumulate(grads, *x, g.clone());
            }
            Op::Sigmoid { x } => {
                let dx = zip_tensors(g, &node.value, |g, o| g * o * (T::one() - o));
                self.accumulate(grads, *x, dx);
            }
            Op::Tanh { x } => {
                let dx = zip_tensors(g, &node.value, |g, o| g * (T::one() - o * o));
                self.accumulate(grads, *x, dx);
            }
            Op::LeakyRelu { x, slope } => {
                let s = *slope;
                let dx = zip_tensors(g, self.value(*x), |g, v| if v > T::zero() { g } else { g * s });
                self.accumulate(grads, *x, dx);
            }
            Op::Sqrt { x } => {
                let two = T::of(2.0);
                let dx = zip_tensors(g, &node.value, |g, o| g / (two * o));
                self.accumulate(grads, *x, dx);
            }
            Op::Ln { x } => {
                let dx = zip_tensors(g, self.value(*x), |g, v| g / v);
                self.accumulate(grads, *x, dx);
            }
            Op::Powf { x, exponent } => {
                let e = *exponent;
                let dx = zip_tensors(g, self.value(*x), |g, v| g * e * v.powf(e - T::one()));
                self.accumulate(grads, *x, dx);
            }
            Op::AvgPool { x, window, stride } => {
                let dx = kernels::avg_pool_backward(self.shape(*x), g, *window, *stride);
                self.accumulate(grads, *x, dx);
            }
            Op::AdaptiveAvgPool { x } => {
                let dx = kernels::adaptive_avg_pool_backward(self.shape(*x), g);
                self.accumulate(grads, *x, dx);
            }
            Op::TileNearest { x } => {
                let dx = kernels::tile_nearest_backward(self.shape(*x), g);
                self.accumulate(grads, *x, dx);
            }
            Op::Upsample2xBilinear { x } => {
                let dx = kernels::upsample2x_backward(self.shape(*x), g);
                self.accumulate(grads, *x, dx);
            }
            Op::ConcatChannels { xs } => {
                let gs = g.shape();
                let mut c_off = 0;
                for &v in xs {
                    let s = self.shape(v);
                    if self.needs(v) {
                        let mut dv = Tensor::zeros(s);
                        for n in 0..s.n {
                            for c in 0..s.c {
                                let src = g.plane(n, c_off + c);
                                let start = s.idx(n, c, 0, 0);
                                dv.data_mut()[start..start + src.len()].copy_from_slice(src);
                            }
                        }
                        self.accumulate(grads, v, dv);
                    }
                    c_off += s.c;
                    debug_assert!(c_off <= gs.c);
                }
            }
            Op::SliceChannels { x, start } => {
                let xs = self.shape(*x);
                let gs = g.shape();
                let mut dx = Tensor::zeros(xs);
                for n in 0..xs.n {
                    for c in 0..gs.c {
                        let src = g.plane(n, c);
                        let dst = xs.idx(n, start + c, 0, 0);
                        dx.data_mut()[dst..dst + src.len()].copy_from_slice(src);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::MulChannel { x, weight } => {
                let xs = self.shape(*x);
                if self.needs(*x) {
                    let wt = self.value(*weight);
                    let mut dx = Tensor::zeros(xs);
                    for n in 0..xs.n {
                        for c in 0..xs.c {
                            let wv = wt.data()[c];
                            let src = g.plane(n, c);
                            let start = xs.idx(n, c, 0, 0);
                            for (d, &gv) in dx.data_mut()[start..start + src.len()].iter_mut().zip(src) {
                                *d = gv * wv;
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*weight) {
                    let xt = self.value(*x);
                    let mut dw = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
                    for n in 0..xs.n {
                        for c in 0..xs.c {
                            let mut acc = T::zero();
                            for (&gv, &xv) in g.plane(n, c).iter().zip(xt.plane(n, c)) {
                                acc += gv * xv;
                            }
                            dw.data_mut()[c] += acc;
                        }
                    }
                    self.accumulate(grads, *weight, dw);
                }
            }
            Op::WarpBilinear { image, flow } => {
                let (dimg, dflow) = kernels::warp_backward(
                    self.value(*image),
                    self.value(*flow),
                    g,
                    self.needs(*image),
                    self.needs(*flow),
                );
                if let Some(d) = dimg {
                    self.accumulate(grads, *image, d);
                }
                if let Some(d) = dflow {
                    self.accumulate(grads, *flow, d);
                }
            }
            Op::SumAll { x } => {
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::MeanAll { x } => {
                let xs = self.shape(*x);
                let gv = g.item() / T::of(xs.numel() as f64);
                self.accumulate(grads, *x, Tensor::full(xs, gv));
            }
        }
    }
}

fn zip_tensors<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("shape preserved")
}
