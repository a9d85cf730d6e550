//! Central finite-difference verification of recorded gradients.
//!
//! Intended to run at `f64`; the default tolerance of 1e-4 leaves no headroom
//! at `f32`.

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compares recorded gradients of `f` against central finite differences.
///
/// `f` builds a graph from leaf vars (one per input, in order) and returns any
/// output node; the harness reduces it to a scalar with a fixed non-uniform
/// weighting so that symmetric gradient errors cannot cancel. Relative error
/// uses the denominator max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], eps: f64) -> GradCheckReport
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Var,
{
    grad_check_weighted(f, inputs, eps, true)
}

/// As [`grad_check`], with the cosine output weighting optional (`weighted =
/// false` reduces with a plain sum).
pub fn grad_check_weighted<T, F>(f: F, inputs: &[Tensor<T>], eps: f64, weighted: bool) -> GradCheckReport
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Var,
{
    let loss_of = |tensors: &[Tensor<T>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&mut tape, &vars);
        let loss = reduce(&mut tape, out, weighted);
        tape.value(loss).item().into_f64()
    };

    // Analytic gradients from one recorded backward pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars);
    let loss = reduce(&mut tape, out, weighted);
    let grads = tape.backward(loss).expect("scalar loss");

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0 };
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[ii])
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![T::zero(); input.numel()]);
        for ei in 0..input.numel() {
            let orig = input.data()[ei];
            work[ii].data_mut()[ei] = orig + T::of(eps);
            let plus = loss_of(&work);
            work[ii].data_mut()[ei] = orig - T::of(eps);
            let minus = loss_of(&work);
            work[ii].data_mut()[ei] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ei].into_f64();
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_err {
                report = GradCheckReport { max_rel_err: rel, worst: (ii, ei), analytic: a, numeric };
            }
        }
    }
    report
}

/// Reduce an arbitrary output to a scalar loss. The cosine pattern is fixed
/// and cheap to recompute identically on every probe.
fn reduce<T: Scalar>(tape: &mut Tape<T>, out: Var, weighted: bool) -> Var {
    if !weighted {
        return tape.sum_all(out);
    }
    let shape = tape.shape(out);
    let mut k = 0usize;
    let weights = Tensor::from_fn(shape, |_, _, _, _| {
        k += 1;
        T::of(((k as f64) * 0.7).cos() + 1.3)
    });
    let w = tape.constant(weights);
    let prod = tape.mul(out, w).expect("same shape");
    tape.sum_all(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn catches_a_wrong_gradient() {
        // sqrt has derivative 1/(2*sqrt); a graph pretending x^2 has
        // derivative x (instead of 2x) must be flagged.
        let inputs = vec![Tensor::from_fn(Shape::new(1, 1, 2, 2), |_, _, y, x| 1.0 + (y * 2 + x) as f64)];
        let report = grad_check(
            |tape, vars| {
                let half = tape.scale(vars[0], 0.5);
                tape.mul(half, vars[0]).unwrap() // d/dx (x^2/2) = x, but forward is x^2/2
            },
            &inputs,
            1e-6,
        );
        assert!(report.passes(1e-6), "correct op flagged: {report:?}");

        // Now deliberately mis-scale the loss between analytic and numeric by
        // checking a kinked function at its kink.
        let at_kink = vec![Tensor::<f64>::zeros(Shape::new(1, 1, 1, 1))];
        let report = grad_check(|tape, vars| tape.leaky_relu(vars[0], 0.1), &at_kink, 1e-3);
        assert!(!report.passes(1e-4), "kink should disagree: {report:?}");
    }

    #[test]
    fn simple_chain_passes() {
        let inputs = vec![Tensor::from_fn(Shape::new(1, 2, 3, 3), |_, c, y, x| {
            0.3 + 0.1 * (c as f64) - 0.05 * (y as f64) + 0.02 * (x as f64)
        })];
        let report = grad_check(
            |tape, vars| {
                let s = tape.sigmoid(vars[0]);
                tape.tanh(s)
            },
            &inputs,
            1e-5,
        );
        assert!(report.passes(1e-6), "{report:?}");
    }
}
