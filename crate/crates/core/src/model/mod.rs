//! Residual-stack MLP forecaster, its optimiser, and the seasonal-naive
//! baseline.

mod adam;
mod checkpoint;
mod naive;
mod network;

pub use adam::{adam_step, AdamConfig, LrSchedule, OptimizerState};
pub use checkpoint::Checkpoint;
pub use naive::{seasonal_naive, seasonal_naive_batch};
pub use network::{backward, forward, loss_value, BlockCache, Dense, ForecastModel, ForwardCache, ParamSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mae,
    Smape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowScaling {
    None,
    /// Divide each input row by its mean (rows with mean ≤ 1e-8 keep scale 1)
    /// and multiply the forecast back.
    Mean,
}

/// Rows whose mean is at or below this are left unscaled.
pub const SCALE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub horizon: usize,
    pub n_stacks: usize,
    pub blocks_per_stack: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub activation: Activation,
    /// Max-pooling kernel per stack; 1 disables pooling and forecast
    /// interpolation for that stack.
    pub pooling_kernels: Vec<usize>,
    pub loss: LossKind,
    pub window_scaling: WindowScaling,
}

impl ModelConfig {
    /// Three single-block stacks, two hidden layers of 512 ReLU units.
    pub fn new(input_size: usize, horizon: usize) -> Self {
        Self {
            input_size,
            horizon,
            n_stacks: 3,
            blocks_per_stack: 1,
            hidden_layers: 2,
            hidden_units: 512,
            activation: Activation::Relu,
            pooling_kernels: vec![1, 1, 1],
            loss: LossKind::Mae,
            window_scaling: WindowScaling::Mean,
        }
    }

    pub fn with_hidden_units(mut self, units: usize) -> Self {
        self.hidden_units = units;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_size", self.input_size),
            ("horizon", self.horizon),
            ("n_stacks", self.n_stacks),
            ("blocks_per_stack", self.blocks_per_stack),
            ("hidden_layers", self.hidden_layers),
            ("hidden_units", self.hidden_units),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.pooling_kernels.len() != self.n_stacks {
            return Err(Error::Config(format!(
                "{} pooling kernels for {} stacks",
                self.pooling_kernels.len(),
                self.n_stacks
            )));
        }
        if self.pooling_kernels.contains(&0) {
            return Err(Error::Config("pooling kernels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.n_stacks * self.blocks_per_stack
    }

    pub(crate) fn block_kernel(&self, block: usize) -> usize {
        self.pooling_kernels[block / self.blocks_per_stack]
    }
}
