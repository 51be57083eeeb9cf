use serde::{Deserialize, Serialize};

use super::{ParamStore, Real};

/// Adam hyper-parameters and step counter, with a staircase exponential
/// learning-rate decay: `lr · decay_rate^floor(t / decay_every)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_rate: f64,
    /// `0` disables decay.
    pub decay_every: u64,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_rate: 1.0,
            decay_every: 0,
        }
    }

    pub fn with_decay(mut self, decay_rate: f64, decay_every: u64) -> Self {
        self.decay_rate = decay_rate;
        self.decay_every = decay_every;
        self
    }

    pub fn effective_lr(&self, step: u64) -> f64 {
        if self.decay_every == 0 {
            return self.lr;
        }
        self.lr * self.decay_rate.powi((step / self.decay_every) as i32)
    }
}

fn update(param: &mut [Real], grad: &mut [Real], m: &mut [Real], v: &mut [Real], k: &Coeffs) {
    for i in 0..param.len() {
        let g = grad[i] as f64;
        let mi = k.beta1 * m[i] as f64 + (1.0 - k.beta1) * g;
        let vi = k.beta2 * v[i] as f64 + (1.0 - k.beta2) * g * g;
        m[i] = mi as Real;
        v[i] = vi as Real;
        let m_hat = mi / k.bc1;
        let v_hat = vi / k.bc2;
        param[i] = (param[i] as f64 - k.lr * m_hat / (v_hat.sqrt() + k.eps)) as Real;
        grad[i] = 0.0;
    }
}

struct Coeffs {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

/// One bias-corrected Adam update over every layer; gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) {
    state.step += 1;
    let t = state.step;
    let k = Coeffs {
        lr: state.effective_lr(t),
        beta1: state.beta1,
        beta2: state.beta2,
        eps: state.eps,
        bc1: 1.0 - state.beta1.powi(t as i32),
        bc2: 1.0 - state.beta2.powi(t as i32),
    };
    for l in params.layers_mut() {
        update(
            l.weight.data_mut(),
            l.grad_weight.data_mut(),
            l.m_weight.data_mut(),
            l.v_weight.data_mut(),
            &k,
        );
        update(&mut l.bias, &mut l.grad_bias, &mut l.m_bias, &mut l.v_bias, &k);
    }
}
