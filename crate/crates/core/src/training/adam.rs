use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Added to the gradient as `l2 · θ` before the moment update.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.95,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-5,
        }
    }
}

/// First/second moments mirroring the parameter tensors, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Tensor2>,
    pub second: Vec<Tensor2>,
}

impl OptimizerState {
    pub fn new<P: Parameterized>(params: &P) -> Self {
        let zeros: Vec<Tensor2> = params.tensors().iter().map(|t| t.zeros_like()).collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One Adam update with bias correction. `rates[i]` is the learning rate of
/// tensor `i`; `None` freezes it (no update, moments untouched).
pub fn adam_step<P: Parameterized>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    rates: &[Option<f64>],
    names: &[String],
    config: &AdamConfig,
) -> Result<()> {
    let grads = grads.tensors();
    let n = grads.len();
    if rates.len() != n || state.first.len() != n || names.len() != n {
        return Err(Error::dim(
            "optimizer tensors",
            n,
            rates.len().min(state.first.len()),
        ));
    }
    for (g, name) in grads.iter().zip(names) {
        if g.values().iter().any(|v| v.is_nan()) {
            return Err(Error::NanGradient { name: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let (b1, b2, eps, l2) = (config.beta1, config.beta2, config.epsilon, config.l2);
    for (i, p) in params.tensors_mut().into_iter().enumerate() {
        let Some(lr) = rates[i] else { continue };
        let m = state.first[i].values_mut();
        let v = state.second[i].values_mut();
        for (j, (theta, &g)) in p.values_mut().iter_mut().zip(grads[i].values()).enumerate() {
            let g = g + l2 * *theta;
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
