use serde::{Deserialize, Serialize};

use super::ParameterBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { algorithm: Algorithm::Adam, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd(lr: f64) -> Self {
        Self { algorithm: Algorithm::Sgd, lr, ..Self::adam(lr) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParameterBundle) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }
}

/// Apply one optimizer step in place.
pub fn update(params: &mut ParameterBundle, grads: &ParameterBundle, opt: &mut OptimizerState) {
    debug_assert!(params.congruent(grads), "gradient shapes differ from parameters");
    let c = opt.config;
    opt.step += 1;
    match c.algorithm {
        Algorithm::Sgd => {
            for (p, g) in params.tensors.iter_mut().zip(&grads.tensors) {
                for (x, dx) in p.data.iter_mut().zip(&g.data) {
                    *x -= c.lr * dx;
                }
            }
        }
        Algorithm::Adam => {
            let t = opt.step as i32;
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            for (((p, g), m), v) in params.tensors.iter_mut().zip(&grads.tensors).zip(&mut opt.m).zip(&mut opt.v) {
                for i in 0..p.data.len() {
                    let gi = g.data[i];
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p.data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                }
            }
        }
    }
}
