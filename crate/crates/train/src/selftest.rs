//! Programmatic gradient-check and oracle suites, shared by the `selftest`
//! subcommand and the acceptance tests.

use pcl_autodiff::{grad_check, ParamStore, Shape, Tape, Tensor, Var};
use pcl_net::{charbonnier_loss, convlstm_step, epe_loss, mssim_loss, psnr_loss, ConvLstmState, Fwd, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];
const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rt(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::new(shape, (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn check_over_seeds(
    name: &str,
    results: &mut Vec<CheckResult>,
    build: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>),
) {
    let mut worst = 0.0f64;
    let mut passed = true;
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, f) = build(&mut rng);
        let report = grad_check(|tape, vars| f(tape, vars), &inputs, EPS);
        worst = worst.max(report.max_rel_err);
        passed &= report.passes(TOL);
    }
    results.push(CheckResult {
        name: name.to_string(),
        passed,
        detail: format!("max rel err {worst:.3e} over {} seeds (tol {TOL:.0e})", SEEDS.len()),
    });
}

/// Finite-difference checks for every differentiable primitive, 5 seeds each
/// at double precision.
pub fn gradient_suite() -> Vec<CheckResult> {
    let mut results = Vec::new();

    check_over_seeds("conv2d", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 5, 5), -1.0, 1.0);
        let w = rt(rng, Shape::new(3, 2, 3, 3), -0.7, 0.7);
        let b = rt(rng, Shape::new(1, 3, 1, 1), -0.5, 0.5);
        (vec![x, w, b], Box::new(|t, v| t.conv2d(v[0], v[1], Some(v[2]), 2, 1, 1).unwrap()))
    });
    check_over_seeds("sigmoid", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 4, 4), -2.0, 2.0);
        (vec![x], Box::new(|t, v| t.sigmoid(v[0])))
    });
    check_over_seeds("tanh", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 4, 4), -2.0, 2.0);
        (vec![x], Box::new(|t, v| t.tanh(v[0])))
    });
    check_over_seeds("leaky_relu", &mut results, |rng| {
        let x = Tensor::new(
            Shape::new(1, 2, 4, 4),
            (0..32)
                .map(|_| rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        (vec![x], Box::new(|t, v| t.leaky_relu(v[0], 0.1)))
    });
    check_over_seeds("avg_pool2d", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 6, 6), -1.0, 1.0);
        (vec![x], Box::new(|t, v| t.avg_pool2d(v[0], 2, 2).unwrap()))
    });
    check_over_seeds("adaptive_avg_pool", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 7, 5), -1.0, 1.0);
        (vec![x], Box::new(|t, v| t.adaptive_avg_pool(v[0], 3, 2).unwrap()))
    });
    check_over_seeds("upsample2x_bilinear", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 3, 4), -1.0, 1.0);
        (vec![x], Box::new(|t, v| t.upsample2x_bilinear(v[0])))
    });
    check_over_seeds("tile_nearest", &mut results, |rng| {
        let x = rt(rng, Shape::new(1, 2, 2, 2), -1.0, 1.0);
        (vec![x], Box::new(|t, v| t.tile_nearest(v[0], 5, 7).unwrap()))
    });
    check_over_seeds("bilinear_sampler", &mut results, |rng| {
        let img = rt(rng, Shape::new(1, 2, 6, 6), 0.0, 1.0);
        let flow = Tensor::new(
            Shape::new(1, 2, 6, 6),
            (0..72)
                .map(|_| rng.gen_range(0.05..0.45) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        (vec![img, flow], Box::new(|t, v| t.warp_bilinear(v[0], v[1]).unwrap()))
    });

    check_over_seeds("convlstm_step", &mut results, |rng| {
        let (c_in, c) = (2usize, 2usize);
        let mut inputs = vec![
            rt(rng, Shape::new(1, c_in, 4, 4), -1.0, 1.0),
            rt(rng, Shape::new(1, c, 4, 4), -0.5, 0.5),
            rt(rng, Shape::new(1, c, 4, 4), -0.5, 0.5),
        ];
        for _ in 0..4 {
            inputs.push(rt(rng, Shape::new(c, c_in, 3, 3), -0.5, 0.5)); // wx
            inputs.push(rt(rng, Shape::new(c, c, 3, 3), -0.5, 0.5)); // wh
            inputs.push(rt(rng, Shape::new(1, c, 1, 1), -0.5, 0.5)); // b
        }
        for _ in 0..3 {
            inputs.push(rt(rng, Shape::new(1, c, 1, 1), -0.5, 0.5)); // peepholes
        }
        let f = move |tape: &mut Tape<f64>, v: &[Var]| -> Var {
            let (x, h0, c0) = (v[0], v[1], v[2]);
            let gate = |tape: &mut Tape<f64>, gi: usize, peep: Option<(usize, Var)>| -> Var {
                let a = tape.conv2d(x, v[3 + gi * 3], Some(v[5 + gi * 3]), 1, 1, 1).unwrap();
                let h = tape.conv2d(h0, v[4 + gi * 3], None, 1, 1, 1).unwrap();
                let mut pre = tape.add(a, h).unwrap();
                if let Some((pi, cell)) = peep {
                    let term = tape.mul_channel(cell, v[15 + pi]).unwrap();
                    pre = tape.add(pre, term).unwrap();
                }
                pre
            };
            let i_pre = gate(tape, 0, Some((0, c0)));
            let i = tape.sigmoid(i_pre);
            let f_pre = gate(tape, 1, Some((1, c0)));
            let fg = tape.sigmoid(f_pre);
            let g_pre = gate(tape, 2, None);
            let g = tape.tanh(g_pre);
            let keep = tape.mul(fg, c0).unwrap();
            let write = tape.mul(i, g).unwrap();
            let cell = tape.add(keep, write).unwrap();
            let o_pre = gate(tape, 3, Some((2, cell)));
            let o = tape.sigmoid(o_pre);
            let act = tape.tanh(cell);
            tape.mul(o, act).unwrap()
        };
        (inputs, Box::new(f))
    });

    // Loss family, differentiated through a warp so the flow path is covered.
    check_over_seeds("charbonnier_loss", &mut results, |rng| {
        let a = rt(rng, Shape::new(1, 2, 4, 4), 0.0, 1.0);
        let b = rt(rng, Shape::new(1, 2, 4, 4), 0.0, 1.0);
        (
            vec![a, b],
            Box::new(|tape, v| {
                let store = ParamStore::<f64>::new();
                let bound = store.bind(tape, false);
                let mut fwd = Fwd { tape, params: &bound, leaky_slope: 0.1 };
                charbonnier_loss(&mut fwd, v[0], v[1], 0.4, 1e-6).unwrap()
            }),
        )
    });
    check_over_seeds("psnr_loss", &mut results, |rng| {
        let a = rt(rng, Shape::new(1, 2, 4, 4), 0.0, 1.0);
        let b = rt(rng, Shape::new(1, 2, 4, 4), 0.0, 1.0);
        (
            vec![a, b],
            Box::new(|tape, v| {
                let store = ParamStore::<f64>::new();
                let bound = store.bind(tape, false);
                let mut fwd = Fwd { tape, params: &bound, leaky_slope: 0.1 };
                psnr_loss(&mut fwd, v[0], v[1]).unwrap()
            }),
        )
    });
    check_over_seeds("mssim_loss", &mut results, |rng| {
        let a = rt(rng, Shape::new(1, 1, 7, 7), 0.1, 0.9);
        let b = rt(rng, Shape::new(1, 1, 7, 7), 0.1, 0.9);
        (
            vec![a, b],
            Box::new(|tape, v| {
                let store = ParamStore::<f64>::new();
                let bound = store.bind(tape, false);
                let mut fwd = Fwd { tape, params: &bound, leaky_slope: 0.1 };
                mssim_loss(&mut fwd, v[0], v[1], 7, 1e-4, 9e-4).unwrap()
            }),
        )
    });
    check_over_seeds("epe_loss", &mut results, |rng| {
        let pred = rt(rng, Shape::new(1, 2, 4, 4), -2.0, 2.0);
        let gt = rt(rng, Shape::new(1, 2, 4, 4), -2.0, 2.0);
        (
            vec![pred, gt],
            Box::new(|tape, v| {
                let store = ParamStore::<f64>::new();
                let bound = store.bind(tape, false);
                let mut fwd = Fwd { tape, params: &bound, leaky_slope: 0.1 };
                epe_loss(&mut fwd, v[0], v[1]).unwrap()
            }),
        )
    });

    results
}

/// Independent scalar-loop oracles for conv2d and the ConvLSTM step.
pub fn oracle_suite() -> Vec<CheckResult> {
    let mut results = Vec::new();

    // conv2d against a direct quadruple loop.
    let mut worst = 0.0f64;
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = 1 + (seed % 2) as usize;
        let pad = (seed % 3) as usize;
        let dil = 1 + (seed / 4 % 2) as usize;
        let x = rt(&mut rng, Shape::new(2, 3, 9, 9), -1.0, 1.0);
        let w = rt(&mut rng, Shape::new(4, 3, 3, 3), -1.0, 1.0);
        let span = dil * 2 + 1;
        if 9 + 2 * pad < span {
            continue;
        }
        let oh = (9 + 2 * pad - span) / stride + 1;
        let mut expected = Tensor::<f64>::zeros(Shape::new(2, 4, oh, oh));
        for n in 0..2 {
            for oc in 0..4 {
                for oy in 0..oh {
                    for ox in 0..oh {
                        let mut acc = 0.0;
                        for ic in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * stride + ky * dil) as isize - pad as isize;
                                    let ix = (ox * stride + kx * dil) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= 9 || ix >= 9 {
                                        continue;
                                    }
                                    acc += x.at(n, ic, iy as usize, ix as usize) * w.at(oc, ic, ky, kx);
                                }
                            }
                        }
                        expected.set(n, oc, oy, ox, acc);
                    }
                }
            }
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.constant(w);
        let y = tape.conv2d(xv, wv, None, stride, pad, dil).unwrap();
        worst = worst.max(tape.value(y).max_abs_diff(&expected));
    }
    results.push(CheckResult {
        name: "conv2d vs scalar oracle".into(),
        passed: worst < 1e-10,
        detail: format!("max abs diff {worst:.3e} (tol 1e-10)"),
    });

    // ConvLSTM step against a per-pixel evaluation of the gate equations.
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
        let (c_in, c, k) = (3usize, 3usize, 3usize);
        let mut store = ParamStore::<f64>::new();
        let mut tensors = Vec::new();
        for gate in ["i", "f", "c", "o"] {
            let wx = rt(&mut rng, Shape::new(c, c_in, k, k), -0.5, 0.5);
            let wh = rt(&mut rng, Shape::new(c, c, k, k), -0.5, 0.5);
            let b = rt(&mut rng, Shape::new(1, c, 1, 1), -0.5, 0.5);
            store.insert(format!("cell.lstm.wx{gate}.w"), wx.clone()).unwrap();
            store.insert(format!("cell.lstm.wh{gate}.w"), wh.clone()).unwrap();
            store.insert(format!("cell.lstm.b{gate}"), b.clone()).unwrap();
            tensors.push((wx, wh, b));
        }
        let mut peeps = Vec::new();
        for peep in ["wci", "wcf", "wco"] {
            let p = rt(&mut rng, Shape::new(1, c, 1, 1), -0.5, 0.5);
            store.insert(format!("cell.lstm.{peep}"), p.clone()).unwrap();
            peeps.push(p);
        }
        let x = rt(&mut rng, Shape::new(1, c_in, 6, 6), -1.0, 1.0);
        let h0 = rt(&mut rng, Shape::new(1, c, 6, 6), -0.8, 0.8);
        let c0 = rt(&mut rng, Shape::new(1, c, 6, 6), -0.8, 0.8);

        // Scalar oracle.
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let conv_at = |src: &Tensor<f64>, w: &Tensor<f64>, oc: usize, y: usize, xx: usize| -> f64 {
            let mut acc = 0.0;
            for ic in 0..src.shape().c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = y as isize + ky as isize - 1;
                        let ix = xx as isize + kx as isize - 1;
                        if iy < 0 || ix < 0 || iy >= 6 || ix >= 6 {
                            continue;
                        }
                        acc += src.at(0, ic, iy as usize, ix as usize) * w.at(oc, ic, ky, kx);
                    }
                }
            }
            acc
        };
        let mut h_expect = Tensor::<f64>::zeros(Shape::new(1, c, 6, 6));
        for ch in 0..c {
            for y in 0..6 {
                for xx in 0..6 {
                    let cp = c0.at(0, ch, y, xx);
                    let i = sigmoid(
                        conv_at(&x, &tensors[0].0, ch, y, xx)
                            + conv_at(&h0, &tensors[0].1, ch, y, xx)
                            + peeps[0].data()[ch] * cp
                            + tensors[0].2.data()[ch],
                    );
                    let f = sigmoid(
                        conv_at(&x, &tensors[1].0, ch, y, xx)
                            + conv_at(&h0, &tensors[1].1, ch, y, xx)
                            + peeps[1].data()[ch] * cp
                            + tensors[1].2.data()[ch],
                    );
                    let g = (conv_at(&x, &tensors[2].0, ch, y, xx)
                        + conv_at(&h0, &tensors[2].1, ch, y, xx)
                        + tensors[2].2.data()[ch])
                        .tanh();
                    let ct = f * cp + i * g;
                    let o = sigmoid(
                        conv_at(&x, &tensors[3].0, ch, y, xx)
                            + conv_at(&h0, &tensors[3].1, ch, y, xx)
                            + peeps[2].data()[ch] * ct
                            + tensors[3].2.data()[ch],
                    );
                    h_expect.set(0, ch, y, xx, o * ct.tanh());
                }
            }
        }

        let cfg = ModelConfig::desk();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut fwd = Fwd::new(&mut tape, &bound, &cfg);
        let xv = fwd.tape.constant(x);
        let hv = fwd.tape.constant(h0);
        let cv = fwd.tape.constant(c0);
        let state = convlstm_step(&mut fwd, "cell", xv, ConvLstmState { hidden: hv, cell: cv }).unwrap();
        worst = worst.max(tape.value(state.hidden).max_abs_diff(&h_expect));
    }
    results.push(CheckResult {
        name: "convlstm_step vs scalar oracle".into(),
        passed: worst < 1e-10,
        detail: format!("max abs diff {worst:.3e} (tol 1e-10)"),
    });

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for r in gradient_suite().into_iter().chain(oracle_suite()) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
