//! Parameter updates: Adam (default) and plain SGD with momentum.

use std::collections::HashMap;

use pcl_autodiff::{ParamStore, Scalar, Tensor};

use crate::config::OptimKind;

pub struct Optimizer<T: Scalar> {
    kind: OptimKind,
    lr: f64,
    weight_decay: f64,
    step_count: u64,
    /// First/second moment (Adam) or velocity (momentum), keyed by parameter
    /// name, allocated on first touch.
    pub(crate) m: HashMap<String, Tensor<T>>,
    pub(crate) v: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimKind, lr: f64, weight_decay: f64) -> Self {
        Optimizer { kind, lr, weight_decay, step_count: 0, m: HashMap::new(), v: HashMap::new() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub(crate) fn restore_state(&mut self, step_count: u64, m: HashMap<String, Tensor<T>>, v: HashMap<String, Tensor<T>>) {
        self.step_count = step_count;
        self.m = m;
        self.v = v;
    }

    /// Apply one update from named gradients. Parameters without a gradient
    /// entry are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &HashMap<String, Tensor<T>>) {
        self.step_count += 1;
        let t = self.step_count;
        match self.kind {
            OptimKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let (b1, b2) = (T::of(beta1), T::of(beta2));
                let one_m_b1 = T::of(1.0 - beta1);
                let one_m_b2 = T::of(1.0 - beta2);
                let lr = T::of(self.lr);
                let eps_t = T::of(eps);
                let wd = T::of(self.weight_decay);
                for (name, param) in params.iter_mut() {
                    let Some(grad) = grads.get(name) else { continue };
                    let m = self
                        .m
                        .entry(name.to_string())
                        .or_insert_with(|| Tensor::zeros(param.shape()));
                    let v = self
                        .v
                        .entry(name.to_string())
                        .or_insert_with(|| Tensor::zeros(param.shape()));
                    let inv_bc1 = T::of(1.0 / bc1);
                    let inv_bc2 = T::of(1.0 / bc2);
                    for i in 0..param.numel() {
                        let mut g = grad.data()[i];
                        if self.weight_decay != 0.0 {
                            g += wd * param.data()[i];
                        }
                        let mi = b1 * m.data()[i] + one_m_b1 * g;
                        let vi = b2 * v.data()[i] + one_m_b2 * g * g;
                        m.data_mut()[i] = mi;
                        v.data_mut()[i] = vi;
                        let m_hat = mi * inv_bc1;
                        let v_hat = vi * inv_bc2;
                        param.data_mut()[i] = param.data()[i] - lr * m_hat / (v_hat.sqrt() + eps_t);
                    }
                }
            }
            OptimKind::Momentum { momentum } => {
                let mu = T::of(momentum);
                let lr = T::of(self.lr);
                let wd = T::of(self.weight_decay);
                for (name, param) in params.iter_mut() {
                    let Some(grad) = grads.get(name) else { continue };
                    let vel = self
                        .m
                        .entry(name.to_string())
                        .or_insert_with(|| Tensor::zeros(param.shape()));
                    for i in 0..param.numel() {
                        let mut g = grad.data()[i];
                        if self.weight_decay != 0.0 {
                            g += wd * param.data()[i];
                        }
                        let v = mu * vel.data()[i] + g;
                        vel.data_mut()[i] = v;
                        param.data_mut()[i] = param.data()[i] - lr * v;
                    }
                }
            }
        }
    }
}
