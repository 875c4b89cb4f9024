use serde::{Deserialize, Serialize};

use super::{ForecastModel, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step decay: the rate is multiplied by `factor` at each of `n_decays`
/// evenly spaced boundaries within `max_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub max_steps: u64,
    pub n_decays: u32,
    pub factor: f64,
}

impl LrSchedule {
    pub fn constant() -> Self {
        Self {
            max_steps: u64::MAX,
            n_decays: 0,
            factor: 1.0,
        }
    }

    pub fn step_decay(max_steps: u64) -> Self {
        Self {
            max_steps,
            n_decays: 3,
            factor: 0.5,
        }
    }

    /// Learning rate after `completed` updates.
    pub fn lr_at(&self, base: f64, completed: u64) -> f64 {
        let parts = self.n_decays as u64 + 1;
        let passed = (1..parts)
            .filter(|i| {
                let boundary = (*i as u128 * self.max_steps as u128 / parts as u128) as u64;
                completed >= boundary.max(1)
            })
            .count();
        base * self.factor.powi(passed as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub schedule: LrSchedule,
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamConfig, schedule: LrSchedule) -> Self {
        Self {
            config,
            schedule,
            step: 0,
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr_at(self.config.lr, self.step)
    }
}

/// One bias-corrected Adam update of `model` in place.
///
/// Non-finite gradients are rejected before anything changes; non-finite
/// parameters after the update are reported as divergence.
pub fn adam_step(model: &mut ForecastModel, grads: &ParamSet, state: &mut OptimizerState) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Diverged {
            step: state.step + 1,
            detail: "non-finite gradient".into(),
        });
    }
    let lr = state.current_lr();
    state.step += 1;
    let AdamConfig { beta1, beta2, eps, .. } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let params = model.params.slices_mut();
    let ms = state.m.slices_mut();
    let vs = state.v.slices_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.slices()).zip(ms).zip(vs) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    if !model.params.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            detail: "non-finite parameters after update".into(),
        });
    }
    Ok(())
}
