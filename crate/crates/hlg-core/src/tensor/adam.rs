//! Adam optimizer with bias correction.

use super::{Grads, Params, Real, TensorError};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Per-parameter first and second moment buffers plus the step counter.
pub struct AdamState<T> {
    cfg: AdamConfig,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig, params: &Params<T>) -> Self {
        let m = params
            .iter()
            .map(|(name, p)| (name.clone(), vec![T::zero(); p.len()]))
            .collect();
        let v = params
            .iter()
            .map(|(name, p)| (name.clone(), vec![T::zero(); p.len()]))
            .collect();
        Self { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update, applied in place. Parameters without an
    /// entry in `grads` are left untouched (their moments do not decay
    /// either; absent means "not part of this step").
    pub fn step(&mut self, params: &mut Params<T>, grads: &Grads<T>) -> Result<(), TensorError> {
        self.t += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);
        let corr1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (name, param) in params.iter_mut() {
            let Some(grad) = grads.get(name) else {
                continue;
            };
            if grad.shape() != param.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: param.shape().to_vec(),
                    rhs: grad.shape().to_vec(),
                });
            }
            let m = self.m.get_mut(name).expect("moment buffer exists");
            let v = self.v.get_mut(name).expect("moment buffer exists");
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
