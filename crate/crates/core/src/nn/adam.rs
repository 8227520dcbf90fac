use serde::{Deserialize, Serialize};

use super::net::{MlpNet, NetGrads};
use crate::error::{Error, Result};

/// Hyper-parameters of the adaptive-moment optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub(crate) fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(first).zip(second) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Moment accumulators for one [`MlpNet`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub first_moment: NetGrads,
    pub second_moment: NetGrads,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(net: &MlpNet, config: AdamConfig) -> Self {
        OptimizerState {
            first_moment: NetGrads::zeros_like(net),
            second_moment: NetGrads::zeros_like(net),
            step_count: 0,
            config,
        }
    }
}

/// Applies one optimizer step to `net`.
pub fn adam_step(net: &mut MlpNet, grads: &NetGrads, state: &mut OptimizerState) -> Result<()> {
    let shapes_match = grads.layers.len() == net.layers().len()
        && state.first_moment.layers.len() == net.layers().len()
        && grads
            .layers
            .iter()
            .zip(net.layers())
            .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.biases.len() == l.biases.len());
    if !shapes_match {
        return Err(Error::Shape("gradients do not match network parameters".into()));
    }

    state.step_count += 1;
    let step = state.step_count;
    let cfg = state.config;
    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment.layers)
        .zip(&mut state.second_moment.layers)
    {
        adam_update(
            layer.weights.as_slice_mut().expect("standard layout"),
            g.weights.as_standard_layout().as_slice().expect("standard layout"),
            m.weights.as_slice_mut().expect("standard layout"),
            v.weights.as_slice_mut().expect("standard layout"),
            step,
            &cfg,
        );
        adam_update(
            layer.biases.as_slice_mut().expect("standard layout"),
            g.biases.as_standard_layout().as_slice().expect("standard layout"),
            m.biases.as_slice_mut().expect("standard layout"),
            v.biases.as_slice_mut().expect("standard layout"),
            step,
            &cfg,
        );
    }
    Ok(())
}

/// Adam state for a plain parameter vector (e.g. global output biases).
#[derive(Debug, Clone)]
pub struct VectorAdam {
    first: Vec<f64>,
    second: Vec<f64>,
    step_count: u64,
    config: AdamConfig,
}

impl VectorAdam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        VectorAdam {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step_count: 0,
            config,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape("gradient length does not match parameters".into()));
        }
        self.step_count += 1;
        adam_update(
            params,
            grads,
            &mut self.first,
            &mut self.second,
            self.step_count,
            &self.config,
        );
        Ok(())
    }
}
