use super::{TinyNet, TrainConfig};

/// Step schedule: `lr * gamma^floor(epoch / step)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.lr_gamma.powi((epoch / cfg.lr_step.max(1)) as i32)
}

/// One Adam update with bias correction and decoupled weight decay, for
/// step `t >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &TrainConfig,
) {
    debug_assert!(t >= 1);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        params[i] -= lr * (mhat / (vhat.sqrt() + cfg.adam_eps) + cfg.weight_decay * params[i]);
    }
}

/// Moment estimates for every parameter tensor of a net.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &TinyNet) -> Self {
        Self {
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut TinyNet, grads: &[Vec<f64>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        for (k, p) in net.params.iter_mut().enumerate() {
            adam_update(&mut p.data, &grads[k], &mut self.m[k], &mut self.v[k], self.t, lr, cfg);
        }
    }
}
