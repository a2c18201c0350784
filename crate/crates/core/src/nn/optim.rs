//! Adam with L2 weight decay and the step learning-rate schedule.

use super::{Param, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moments per parameter array, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<T: Real>(config: AdamConfig, params: &[&Param<T>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update. The weight decay term is added to the gradient before
/// the moment updates; moments are kept in `f64`.
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], state: &mut OptimState) {
    assert_eq!(
        params.len(),
        state.m.len(),
        "optimizer state does not match parameters"
    );
    state.t += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        assert_eq!(p.len(), m.len(), "moment shape");
        let Param { value, grad } = &mut **p;
        for (((theta, g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let th = theta.as_f64();
            let g = g.as_f64() + c.weight_decay * th;
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *theta = T::of(th - c.lr * mhat / (vhat.sqrt() + c.eps));
        }
    }
}

/// `base_lr * 0.9^floor(epoch / 10)`.
pub fn steplr(base_lr: f64, epoch: usize) -> f64 {
    base_lr * 0.9f64.powi((epoch / 10) as i32)
}
