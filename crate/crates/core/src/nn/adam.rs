//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::params::{Param, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Applies one Adam update using the gradients currently stored in `params`.
///
/// Gradients are checked first; a non-finite entry rejects the whole step and leaves
/// parameters, moments and the step counter untouched.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, cfg: &AdamConfig) -> Result<()> {
    if let Some(bad) = params.params().iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFiniteGradient(bad.name.clone()));
    }
    let t = (params.step() + 1) as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let one = T::one();
    for p in params.params_mut() {
        let Param { value, grad, m, v, .. } = p;
        let (value, grad, m, v) = (value.data_mut(), grad.data(), m.data_mut(), v.data_mut());
        for i in 0..value.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.bump_step();
    Ok(())
}
