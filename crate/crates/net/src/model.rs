//! Parameter initialization, parameter counting, and the end-to-end forward
//! pass over one clip.

use pcl_autodiff::{BoundParams, ParamStore, Scalar, Shape, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::extract_clip_pyramids;
use crate::config::ModelConfig;
use crate::decoder::{decode_flows, FlowPyramidVars};
use crate::error::NetError;
use crate::motion::concentrate;

/// One forward execution context: the recording tape plus the parameter
/// binding for that tape.
pub struct Fwd<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a BoundParams,
    pub leaky_slope: f64,
}

impl<'a, T: Scalar> Fwd<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a BoundParams, cfg: &ModelConfig) -> Self {
        Fwd { tape, params, leaky_slope: cfg.leaky_slope }
    }

    pub fn var(&self, name: &str) -> Var {
        self.params.var(name)
    }

    /// Biased convolution from parameters `{prefix}.w` / `{prefix}.b`.
    pub fn conv(&mut self, prefix: &str, x: Var, stride: usize, pad: usize, dil: usize) -> Result<Var, NetError> {
        let w = self.params.var(&format!("{prefix}.w"));
        let b = self.params.var(&format!("{prefix}.b"));
        Ok(self.tape.conv2d(x, w, Some(b), stride, pad, dil)?)
    }

    /// Unbiased convolution from parameter `{prefix}.w`.
    pub fn conv_nb(&mut self, prefix: &str, x: Var, stride: usize, pad: usize, dil: usize) -> Result<Var, NetError> {
        let w = self.params.var(&format!("{prefix}.w"));
        Ok(self.tape.conv2d(x, w, None, stride, pad, dil)?)
    }

    pub fn leaky(&mut self, x: Var) -> Var {
        self.tape.leaky_relu(x, self.leaky_slope)
    }
}

/// Full pipeline for one clip: pyramid extraction, motion concentration, and
/// one decoded flow pyramid per frame transition (`frames.len() - 1` total).
pub fn forward_clip<T: Scalar>(
    fwd: &mut Fwd<T>,
    cfg: &ModelConfig,
    frames: &[Var],
) -> Result<Vec<FlowPyramidVars>, NetError> {
    let pyramids = extract_clip_pyramids(fwd, cfg, frames)?;
    let motion = concentrate(fwd, cfg, &pyramids)?;
    motion
        .features
        .iter()
        .map(|per_level| decode_flows(fwd, cfg, per_level))
        .collect()
}

// ---- initialization --------------------------------------------------------

struct Init<'r, T: Scalar> {
    store: ParamStore<T>,
    rng: &'r mut ChaCha8Rng,
}

impl<T: Scalar> Init<'_, T> {
    /// Fan-in-scaled uniform conv kernel plus zero bias.
    fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize, k: usize) {
        self.conv_kernel(&format!("{prefix}.w"), c_out, c_in, k);
        self.channel(&format!("{prefix}.b"), c_out, 0.0);
    }

    fn conv_kernel(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let t = Tensor::from_fn(Shape::new(c_out, c_in, k, k), |_, _, _, _| {
            T::of(self.rng.gen_range(-bound..bound))
        });
        self.store.insert(name, t).expect("unique parameter names");
    }

    fn channel(&mut self, name: &str, c: usize, value: f64) {
        self.store
            .insert(name, Tensor::full(Shape::new(1, c, 1, 1), T::of(value)))
            .expect("unique parameter names");
    }
}

/// Create every parameter tensor of the model, keyed by module path.
/// Initialization: fan-in-scaled uniform kernels, zero biases, ConvLSTM
/// forget-gate bias at 1.0.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Init { store: ParamStore::new(), rng: &mut rng };
    let ch = cfg.channels;

    // Backbone: stride-2 stem, then four residual stages with stride-2 entry.
    init.conv("backbone.stem", ch[0], 3, 3);
    for (i, &c_out) in ch.iter().enumerate() {
        let c_in = if i == 0 { ch[0] } else { ch[i - 1] };
        let p = format!("backbone.stage{}", i + 1);
        init.conv(&format!("{p}.conv1"), c_out, c_in, 3);
        init.conv(&format!("{p}.conv2"), c_out, c_out, 3);
        init.conv(&format!("{p}.proj"), c_out, c_in, 1);
    }

    // Motion concentration: per-level ConvLSTM, refinement pair, pass-down
    // convolution, and 1x1 reduction.
    let k = cfg.lstm_kernel;
    for level in 0..4 {
        let c = ch[level];
        let c_in = cfg.lstm_in_channels(level);
        let p = format!("motion.l{}", level + 1);
        for gate in ["i", "f", "c", "o"] {
            init.conv_kernel(&format!("{p}.lstm.wx{gate}.w"), c, c_in, k);
            init.conv_kernel(&format!("{p}.lstm.wh{gate}.w"), c, c, k);
            init.channel(&format!("{p}.lstm.b{gate}"), c, if gate == "f" { 1.0 } else { 0.0 });
        }
        for peep in ["wci", "wcf", "wco"] {
            init.channel(&format!("{p}.lstm.{peep}"), c, 0.0);
        }
        init.conv(&format!("{p}.refine1"), c, c, 3);
        init.conv(&format!("{p}.refine2"), c, c, 3);
        if level < 3 {
            init.conv(&format!("{p}.down"), c, c, 3);
        }
        init.conv(&format!("{p}.reduce"), cfg.motion_channels, c, 1);
    }

    // Decoder: five OFE blocks plus the context stack.
    for block in 0..5 {
        let p = format!("decoder.b{}", block + 1);
        let mut c_in = ofe_in_channels(cfg, block);
        for (j, &width) in cfg.ofe_widths.iter().enumerate() {
            init.conv(&format!("{p}.conv{}", j + 1), width, c_in, 3);
            c_in = width;
        }
        init.conv(&format!("{p}.pred"), 2, c_in, 3);
    }
    let mut c_in = cfg.ofe_widths[2] + 2;
    for (j, &width) in cfg.context_widths.iter().enumerate() {
        init.conv(&format!("decoder.context.conv{}", j + 1), width, c_in, 3);
        c_in = width;
    }

    init.store
}

/// Input channels of OFE block `block` (0-based, coarse to fine).
fn ofe_in_channels(cfg: &ModelConfig, block: usize) -> usize {
    let dense = cfg.motion_dense_channels();
    let feat = cfg.ofe_widths[2];
    let motion_level = if block < 4 { Some(3 - block) } else { None };
    let mut c = 0;
    if motion_level.is_some() {
        c += dense;
        if cfg.variant == crate::config::Variant::PclNetC {
            c += cfg.channels[motion_level.unwrap()];
        }
    }
    if block > 0 {
        c += feat + 2;
    }
    c
}

/// Exact number of scalar parameters for a config; pure arithmetic, verified
/// against the actual store in tests.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let conv = |c_out: usize, c_in: usize, k: usize| c_out * c_in * k * k + c_out;
    let ch = cfg.channels;
    let mut total = conv(ch[0], 3, 3);
    for (i, &c_out) in ch.iter().enumerate() {
        let c_in = if i == 0 { ch[0] } else { ch[i - 1] };
        total += conv(c_out, c_in, 3) + conv(c_out, c_out, 3) + conv(c_out, c_in, 1);
    }
    let k = cfg.lstm_kernel;
    for level in 0..4 {
        let c = ch[level];
        let c_in = cfg.lstm_in_channels(level);
        total += 4 * (c * c_in * k * k) + 4 * (c * c * k * k) + 4 * c; // kernels + gate biases
        total += 3 * c; // peepholes
        total += conv(c, c, 3) * 2;
        if level < 3 {
            total += conv(c, c, 3);
        }
        total += conv(cfg.motion_channels, c, 1);
    }
    for block in 0..5 {
        let mut c_in = ofe_in_channels(cfg, block);
        for &width in &cfg.ofe_widths {
            total += conv(width, c_in, 3);
            c_in = width;
        }
        total += conv(2, c_in, 3);
    }
    let mut c_in = cfg.ofe_widths[2] + 2;
    for &width in &cfg.context_widths {
        total += conv(width, c_in, 3);
        c_in = width;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;

    #[test]
    fn param_count_matches_store() {
        for cfg in [
            ModelConfig::desk(),
            ModelConfig::desk().with_variant(Variant::PclNetC),
            ModelConfig::paper_scale(),
        ] {
            let store = init_params::<f64>(&cfg, 0);
            assert_eq!(store.total_params(), param_count(&cfg), "{:?}", cfg.variant);
        }
    }

    #[test]
    fn pclnetc_has_more_params() {
        let plain = param_count(&ModelConfig::desk());
        let coupled = param_count(&ModelConfig::desk().with_variant(Variant::PclNetC));
        assert!(plain < coupled, "{plain} vs {coupled}");
    }

    #[test]
    fn init_is_seeded() {
        let a = init_params::<f64>(&ModelConfig::desk(), 42);
        let b = init_params::<f64>(&ModelConfig::desk(), 42);
        let c = init_params::<f64>(&ModelConfig::desk(), 43);
        for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let first_kernel = "backbone.stem.w";
        assert_ne!(a.get(first_kernel).unwrap().data(), c.get(first_kernel).unwrap().data());
    }

    #[test]
    fn forget_bias_is_one() {
        let store = init_params::<f64>(&ModelConfig::desk(), 0);
        let bf = store.get("motion.l1.lstm.bf").unwrap();
        assert!(bf.data().iter().all(|&v| v == 1.0));
        let bi = store.get("motion.l1.lstm.bi").unwrap();
        assert!(bi.data().iter().all(|&v| v == 0.0));
    }
}
