use super::array::Array;
use crate::error::{Error, Result};

/// Adam step size and decay rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Array>,
    v: Vec<Array>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Array]) -> Self {
        AdamState {
            m: params.iter().map(Array::zeros_like).collect(),
            v: params.iter().map(Array::zeros_like).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Array] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Array] {
        &self.v
    }

    /// Whether the accumulators have the shapes of `params`.
    pub fn matches(&self, params: &[Array]) -> bool {
        self.m.len() == params.len()
            && self.m.iter().zip(params).all(|(m, p)| m.shape() == p.shape())
    }
}

/// One bias-corrected Adam descent step on `params`.
pub fn adam_step(
    params: &mut [Array],
    grads: &[Array],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::Structural(format!(
            "adam step over {} parameters with {} gradients and {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Structural(format!(
                "gradient {i} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((pk, &gk), (mk, vk)) in iter {
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = *mk / c1;
            let v_hat = *vk / c2;
            if m_hat != 0.0 {
                *pk -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        if !p.is_finite() {
            return Err(Error::Numeric(format!(
                "adam step {} produced a non-finite parameter",
                state.t
            )));
        }
    }
    Ok(())
}
