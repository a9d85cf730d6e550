//! Reusable building blocks: the peephole ConvLSTM cell, spatial pyramid
//! pooling, and the dilated convolution stack.

use pcl_autodiff::{Scalar, Var};

use crate::error::NetError;
use crate::model::Fwd;

/// Hidden and cell state of one ConvLSTM layer, both N x C x H x W.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// Gate activations of one step, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmGates {
    pub input: Var,
    pub forget: Var,
    pub output: Var,
    pub candidate: Var,
}

/// One ConvLSTM step.
///
/// All four gates convolve the input and the previous hidden state with a
/// shape-preserving kernel (padding k/2). The input, forget, and output gates
/// carry peephole terms: per-channel weights multiplied elementwise into the
/// cell state (the previous cell for input/forget, the fresh cell for output).
///
/// Parameters under `prefix`: `lstm.wx{i,f,c,o}.w`, `lstm.wh{i,f,c,o}.w`,
/// `lstm.b{i,f,c,o}`, `lstm.wci`, `lstm.wcf`, `lstm.wco`.
pub fn convlstm_step<T: Scalar>(
    fwd: &mut Fwd<T>,
    prefix: &str,
    x: Var,
    state: ConvLstmState,
) -> Result<ConvLstmState, NetError> {
    convlstm_step_detailed(fwd, prefix, x, state).map(|(s, _)| s)
}

pub fn convlstm_step_detailed<T: Scalar>(
    fwd: &mut Fwd<T>,
    prefix: &str,
    x: Var,
    state: ConvLstmState,
) -> Result<(ConvLstmState, ConvLstmGates), NetError> {
    let k = fwd.tape.shape(fwd.var(&format!("{prefix}.lstm.wxi.w"))).h;
    let pad = k / 2;

    let gate_pre = |fwd: &mut Fwd<T>, gate: &str, peep: Option<(&str, Var)>| -> Result<Var, NetError> {
        let xw = fwd.params.var(&format!("{prefix}.lstm.wx{gate}.w"));
        let hw = fwd.params.var(&format!("{prefix}.lstm.wh{gate}.w"));
        let b = fwd.params.var(&format!("{prefix}.lstm.b{gate}"));
        let from_x = fwd.tape.conv2d(x, xw, Some(b), 1, pad, 1)?;
        let from_h = fwd.tape.conv2d(state.hidden, hw, None, 1, pad, 1)?;
        let mut pre = fwd.tape.add(from_x, from_h)?;
        if let Some((peep_name, cell)) = peep {
            let w = fwd.params.var(&format!("{prefix}.lstm.{peep_name}"));
            let term = fwd.tape.mul_channel(cell, w)?;
            pre = fwd.tape.add(pre, term)?;
        }
        Ok(pre)
    };

    let i_pre = gate_pre(fwd, "i", Some(("wci", state.cell)))?;
    let input = fwd.tape.sigmoid(i_pre);
    let f_pre = gate_pre(fwd, "f", Some(("wcf", state.cell)))?;
    let forget = fwd.tape.sigmoid(f_pre);
    let c_pre = gate_pre(fwd, "c", None)?;
    let candidate = fwd.tape.tanh(c_pre);

    let keep = fwd.tape.mul(forget, state.cell)?;
    let write = fwd.tape.mul(input, candidate)?;
    let cell = fwd.tape.add(keep, write)?;

    let o_pre = gate_pre(fwd, "o", Some(("wco", cell)))?;
    let output = fwd.tape.sigmoid(o_pre);
    let cell_act = fwd.tape.tanh(cell);
    let hidden = fwd.tape.mul(output, cell_act)?;

    Ok((ConvLstmState { hidden, cell }, ConvLstmGates { input, forget, output, candidate }))
}

/// Run a ConvLSTM from the zero state over `xs` and return every state.
/// Callers select the latter `l - 1` states as the motion expression.
pub fn convlstm_sequence<T: Scalar>(
    fwd: &mut Fwd<T>,
    prefix: &str,
    xs: &[Var],
) -> Result<Vec<ConvLstmState>, NetError> {
    if xs.len() < 2 {
        return Err(NetError::ClipTooShort(xs.len()));
    }
    let xs0 = fwd.tape.shape(xs[0]);
    let c = fwd.tape.shape(fwd.var(&format!("{prefix}.lstm.wxi.w"))).n;
    let zero = pcl_autodiff::Tensor::zeros(pcl_autodiff::Shape::new(xs0.n, c, xs0.h, xs0.w));
    let h0 = fwd.tape.constant(zero.clone());
    let c0 = fwd.tape.constant(zero);
    let mut state = ConvLstmState { hidden: h0, cell: c0 };
    let mut states = Vec::with_capacity(xs.len());
    for &x in xs {
        state = convlstm_step(fwd, prefix, x, state)?;
        states.push(state);
    }
    Ok(states)
}

/// Fixed-length pyramid-pooled descriptor: one channel-preserving pooled map
/// per bin edge.
#[derive(Debug, Clone)]
pub struct SppDescriptor {
    pub maps: Vec<(usize, Var)>,
}

/// Flattened descriptor length per image for `c` channels.
pub fn spp_descriptor_len(c: usize, bins: &[usize]) -> usize {
    c * bins.iter().map(|b| b * b).sum::<usize>()
}

/// Adaptive average pooling to each bin grid. The descriptor length depends
/// only on the channel count and the bin list, never on H or W.
pub fn spp<T: Scalar>(fwd: &mut Fwd<T>, x: Var, bins: &[usize]) -> Result<SppDescriptor, NetError> {
    let mut maps = Vec::with_capacity(bins.len());
    for &b in bins {
        let pooled = fwd.tape.adaptive_avg_pool(x, b, b)?;
        maps.push((b, pooled));
    }
    Ok(SppDescriptor { maps })
}

/// Re-spatialize a descriptor: nearest-tile every bin map to the target grid
/// and concatenate on channels (bins.len() * C channels out).
pub fn spp_broadcast<T: Scalar>(
    fwd: &mut Fwd<T>,
    descriptor: &SppDescriptor,
    target_h: usize,
    target_w: usize,
) -> Result<Var, NetError> {
    let tiled: Vec<Var> = descriptor
        .maps
        .iter()
        .map(|&(_, m)| fwd.tape.tile_nearest(m, target_h, target_w))
        .collect::<Result<_, _>>()?;
    Ok(fwd.tape.concat_channels(&tiled)?)
}

/// Sequential 3x3 convolutions with the given dilations, padding = dilation
/// (shape preserving), each followed by a leaky rectifier except the last.
/// Parameters under `prefix.conv{j}`.
pub fn dilated_conv_stack<T: Scalar>(
    fwd: &mut Fwd<T>,
    prefix: &str,
    x: Var,
    dilations: &[usize],
    channels: &[usize],
) -> Result<Var, NetError> {
    if dilations.len() != channels.len() {
        return Err(NetError::StackLenMismatch { dilations: dilations.len(), channels: channels.len() });
    }
    let mut cur = x;
    let last = dilations.len() - 1;
    for (j, &dil) in dilations.iter().enumerate() {
        cur = fwd.conv(&format!("{prefix}.conv{}", j + 1), cur, 1, dil, dil)?;
        if j != last {
            cur = fwd.leaky(cur);
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::{init_params, Fwd};
    use pcl_autodiff::{ParamStore, Shape, Tape, Tensor};

    /// Zero-parameter single-level store for cell-level tests.
    fn zero_lstm_store(c_in: usize, c: usize, k: usize) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        for gate in ["i", "f", "c", "o"] {
            store
                .insert(format!("cell.lstm.wx{gate}.w"), Tensor::zeros(Shape::new(c, c_in, k, k)))
                .unwrap();
            store
                .insert(format!("cell.lstm.wh{gate}.w"), Tensor::zeros(Shape::new(c, c, k, k)))
                .unwrap();
            store
                .insert(format!("cell.lstm.b{gate}"), Tensor::zeros(Shape::new(1, c, 1, 1)))
                .unwrap();
        }
        for peep in ["wci", "wcf", "wco"] {
            store.insert(format!("cell.lstm.{peep}"), Tensor::zeros(Shape::new(1, c, 1, 1))).unwrap();
        }
        store
    }

    #[test]
    fn zero_params_zero_state_gives_half_gates() {
        let store = zero_lstm_store(2, 3, 3);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let cfg = ModelConfig::desk();
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::full(Shape::new(1, 2, 4, 4), 0.7));
        let zero = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let h0 = fwd.tape.constant(zero.clone());
        let c0 = fwd.tape.constant(zero);
        let (state, gates) =
            convlstm_step_detailed(&mut fwd, "cell", x, ConvLstmState { hidden: h0, cell: c0 }).unwrap();
        for g in [gates.input, gates.forget, gates.output] {
            assert!(tape.value(g).data().iter().all(|&v| v == 0.5));
        }
        assert!(tape.value(state.cell).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(state.hidden).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_unit_cell_decays_by_half() {
        let store = zero_lstm_store(2, 3, 3);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let cfg = ModelConfig::desk();
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::zeros(Shape::new(1, 2, 4, 4)));
        let h0 = fwd.tape.constant(Tensor::zeros(Shape::new(1, 3, 4, 4)));
        let c0 = fwd.tape.constant(Tensor::full(Shape::new(1, 3, 4, 4), 1.0));
        let state = convlstm_step(&mut fwd, "cell", x, ConvLstmState { hidden: h0, cell: c0 }).unwrap();
        // c1 = f * c0 = 0.5; H1 = o * tanh(c1) = 0.5 * tanh(0.5).
        let expect_h = 0.5 * 0.5f64.tanh();
        for &v in tape.value(state.cell).data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        for &v in tape.value(state.hidden).data() {
            assert!((v - expect_h).abs() < 1e-12, "{v} vs {expect_h}");
            assert!((v - 0.23105857863000487).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_rejects_single_frame() {
        let store = zero_lstm_store(2, 3, 3);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let cfg = ModelConfig::desk();
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::zeros(Shape::new(1, 2, 4, 4)));
        let err = convlstm_sequence(&mut fwd, "cell", &[x]).unwrap_err();
        assert!(matches!(err, NetError::ClipTooShort(1)));
    }

    #[test]
    fn sequence_zero_params_stays_zero() {
        let store = zero_lstm_store(2, 3, 3);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let cfg = ModelConfig::desk();
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let xs: Vec<_> = (0..2)
            .map(|t| fwd.tape.constant(Tensor::full(Shape::new(1, 2, 4, 4), 0.3 * (t + 1) as f64)))
            .collect();
        let states = convlstm_sequence(&mut fwd, "cell", &xs).unwrap();
        assert_eq!(states.len(), 2);
        for s in states {
            assert!(tape.value(s.hidden).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn six_frames_select_five_motion_states() {
        let store = zero_lstm_store(2, 3, 3);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let cfg = ModelConfig::desk();
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let xs: Vec<_> =
            (0..6).map(|_| fwd.tape.constant(Tensor::zeros(Shape::new(1, 2, 4, 4)))).collect();
        let states = convlstm_sequence(&mut fwd, "cell", &xs).unwrap();
        assert_eq!(states[1..].len(), 5);
    }

    #[test]
    fn gates_bounded_and_hidden_in_tanh_range() {
        let cfg = ModelConfig::desk();
        let store = init_params::<f64>(&cfg, 9);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::from_fn(Shape::new(1, 16, 6, 6), |_, c, y, x| {
            ((c + y * 3 + x) as f64 * 0.17).sin() * 2.0
        }));
        let h0 = fwd.tape.constant(Tensor::full(Shape::new(1, 16, 6, 6), 0.4));
        let c0 = fwd.tape.constant(Tensor::full(Shape::new(1, 16, 6, 6), -0.8));
        let (state, gates) =
            convlstm_step_detailed(&mut fwd, "motion.l1", x, ConvLstmState { hidden: h0, cell: c0 })
                .unwrap();
        for g in [gates.input, gates.forget, gates.output] {
            assert!(tape.value(g).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(tape.value(state.hidden).data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn spp_quadrant_means() {
        let cfg = ModelConfig::desk();
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, x| {
            (y * 4 + x + 1) as f64
        }));
        let d = spp(&mut fwd, x, &[2]).unwrap();
        let got = tape.value(d.maps[0].1);
        assert_eq!(got.data(), &[3.5, 5.5, 11.5, 13.5]);
    }

    #[test]
    fn spp_length_invariant_to_extent() {
        let cfg = ModelConfig::desk();
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let bins = [1usize, 2, 4];
        let mut lens = Vec::new();
        for hw in [8usize, 16, 56] {
            let x = fwd.tape.constant(Tensor::zeros(Shape::new(1, 32, hw, hw)));
            let d = spp(&mut fwd, x, &bins).unwrap();
            let len: usize = d.maps.iter().map(|&(_, m)| fwd.tape.value(m).numel()).sum();
            lens.push(len);
        }
        assert!(lens.iter().all(|&l| l == lens[0]));
        assert_eq!(lens[0], spp_descriptor_len(32, &bins));
        assert_eq!(spp_descriptor_len(32, &bins), 672);
    }

    #[test]
    fn spp_broadcast_reproduces_constants() {
        let cfg = ModelConfig::desk();
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        // Per-channel constants: every descriptor element and every broadcast
        // plane must carry its channel's value.
        let x = fwd.tape.constant(Tensor::from_fn(Shape::new(1, 3, 8, 8), |_, c, _, _| c as f64 + 0.25));
        let d = spp(&mut fwd, x, &[1, 2, 4]).unwrap();
        for &(_, m) in &d.maps {
            let t = fwd.tape.value(m);
            for c in 0..3 {
                assert!(t.plane(0, c).iter().all(|&v| v == c as f64 + 0.25));
            }
        }
        let b = spp_broadcast(&mut fwd, &d, 8, 8).unwrap();
        assert_eq!(tape.shape(b), Shape::new(1, 9, 8, 8));
        for bin in 0..3 {
            for c in 0..3 {
                assert!(tape.value(b).plane(0, bin * 3 + c).iter().all(|&v| v == c as f64 + 0.25));
            }
        }
    }

    #[test]
    fn dilated_stack_checks_lengths_and_zero_weights() {
        let cfg = ModelConfig::desk();
        let mut store = ParamStore::<f64>::new();
        let widths = [4usize, 4, 2];
        let mut c_in = 3;
        for (j, &w) in widths.iter().enumerate() {
            store.insert(format!("stack.conv{}.w", j + 1), Tensor::zeros(Shape::new(w, c_in, 3, 3))).unwrap();
            store.insert(format!("stack.conv{}.b", j + 1), Tensor::zeros(Shape::new(1, w, 1, 1))).unwrap();
            c_in = w;
        }
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let x = fwd.tape.constant(Tensor::full(Shape::new(1, 3, 6, 6), 0.9));

        let err = dilated_conv_stack(&mut fwd, "stack", x, &[1, 2], &[4, 4, 2]).unwrap_err();
        assert!(matches!(err, NetError::StackLenMismatch { dilations: 2, channels: 3 }));

        let y = dilated_conv_stack(&mut fwd, "stack", x, &[1, 2, 4], &widths).unwrap();
        assert_eq!(tape.shape(y).spatial(), (6, 6));
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }
}
