use serde::{Deserialize, Serialize};

use super::autograd::{Grads, Mat, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First and second moments aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl OptimState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = params.zeros_like().0;
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

impl AdamW {
    /// One bias-corrected update with decoupled weight decay, applied to the
    /// tensors for which `trainable(id)` holds. Others stay bit-identical.
    pub fn step(
        &self,
        state: &mut OptimState,
        params: &mut ParamStore,
        grads: &Grads,
        trainable: impl Fn(usize) -> bool,
    ) -> Result<()> {
        if grads.0.len() != params.len() || state.m.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in 0..params.len() {
            if !trainable(id) {
                continue;
            }
            let g = &grads.0[id];
            let (m, v) = (&mut state.m[id], &mut state.v[id]);
            let w = params.get_mut(id);
            for i in 0..w.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                w.data[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * w.data[i]);
            }
        }
        Ok(())
    }
}
