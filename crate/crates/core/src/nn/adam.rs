use serde::{Deserialize, Serialize};

use super::{Model, NnError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.0015, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of `value` in place. `t` is the 1-based
/// step number.
pub fn adam_update<T: Scalar>(
    cfg: &AdamConfig,
    t: u64,
    value: &mut [T],
    grad: &[T],
    m: &mut [f64],
    v: &mut [f64],
) -> Result<()> {
    if grad.len() != value.len() || m.len() != value.len() || v.len() != value.len() {
        return Err(NnError::ShapeMismatch(format!(
            "adam: {} values, {} grads, {}/{} moments",
            value.len(),
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..value.len() {
        let g = grad[i].as_f64();
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let step = cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
        value[i] = T::of_f64(value[i].as_f64() - step);
    }
    Ok(())
}

/// Moment estimates for every parameter of a model.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(config: AdamConfig, model: &Model<T>) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies the accumulated gradients of `model`.
    pub fn apply<T: Scalar>(&mut self, model: &mut Model<T>) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.m.len() {
            return Err(NnError::ShapeMismatch("optimizer state built for another model".into()));
        }
        self.step += 1;
        for (i, p) in params.into_iter().enumerate() {
            adam_update(&self.config, self.step, &mut p.value, &p.grad, &mut self.m[i], &mut self.v[i])?;
        }
        Ok(())
    }
}
