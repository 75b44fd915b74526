//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, ToyModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: ToyModelParams,
    pub v: ToyModelParams,
}

impl AdamWState {
    pub fn new(params: &ToyModelParams) -> Self {
        Self {
            step: 0,
            m: ToyModelParams::zeros(params.shape()),
            v: ToyModelParams::zeros(params.shape()),
        }
    }
}

/// `theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
pub fn adamw_step(params: &mut ToyModelParams, grads: &Gradients, state: &mut AdamWState, cfg: &AdamWConfig) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::Invalid("optimizer state shape does not match parameters".into()));
    }
    state.step += 1;
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let ps = params.tensors_mut();
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let update = (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            *p -= cfg.lr * (update + cfg.weight_decay * *p);
        }
    }
    Ok(())
}
