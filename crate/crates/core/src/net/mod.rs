//! Monte-Carlo phase-space networks.
//!
//! Samples live in a `2M`-dimensional phase space with `M = channels · grid`.
//! Coordinate `ch·|X| + x` is the position of channel `ch` at site `x`, and
//! the matching momentum sits `M` entries later.

pub mod classical;
pub mod layers;
pub mod model;
pub mod sampling;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GpError;
use crate::symplectic::LinalgError;

pub use classical::{pncnn_forward, ClassicalLayer, ClassicalNet};
pub use model::{LayerParams, Logits, Model};
pub use sampling::{build_sampling_distribution, draw_samples, SampleBatch, SamplingDistribution};
pub use train::{evaluate, train, Adam, EpochStats, Evaluation, Example, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("flow leaves its domain at coordinate {coordinate} (value {value})")]
    Domain { coordinate: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Dense MLP on the posterior mean.
    Bnn,
    /// Sampled positions only, weights `exp(A)`.
    Pnn,
    /// Full phase space, weights `exp(X)` with `X` Hamiltonian.
    Spnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Bnn, ModelKind::Pnn, ModelKind::Spnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bnn => "bnn",
            ModelKind::Pnn => "pnn",
            ModelKind::Spnn => "spnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bnn" => Ok(ModelKind::Bnn),
            "pnn" => Ok(ModelKind::Pnn),
            "spnn" => Ok(ModelKind::Spnn),
            other => Err(NetError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Number of linear layers; a nonlinearity follows all but the last.
    pub layers: usize,
    pub channels: usize,
    pub grid_size: usize,
    pub classes: usize,
    pub beta: f64,
    pub n_samples: usize,
    pub model_kind: ModelKind,
    /// Block-circulant generators and per-channel biases.
    pub equivariant: bool,
    /// Invertible mean pooling before the final linear layer.
    pub pooling: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            channels: 2,
            grid_size: 60,
            classes: 6,
            beta: 0.1,
            n_samples: 100,
            model_kind: ModelKind::Spnn,
            equivariant: false,
            pooling: false,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |msg: String| Err(NetError::Config(msg));
        if self.layers == 0 {
            return bad("at least one layer is required".into());
        }
        if self.channels == 0 || self.grid_size == 0 {
            return bad("channels and grid size must be positive".into());
        }
        if self.classes == 0 {
            return bad("at least one class is required".into());
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.model_kind != ModelKind::Bnn && self.classes > self.modes() {
            return bad(format!(
                "{} classes cannot be read out of {} position coordinates",
                self.classes,
                self.modes()
            ));
        }
        if self.model_kind == ModelKind::Bnn && (self.equivariant || self.pooling) {
            return bad("equivariance and pooling apply to pnn/spnn only".into());
        }
        Ok(())
    }

    /// `M = channels · grid_size`.
    pub fn modes(&self) -> usize {
        self.channels * self.grid_size
    }

    /// Position coordinate whose sample mean is the logit of `class`.
    ///
    /// Class `c` reads channel `c mod N_C` at site `c div N_C`, so the first
    /// `N_C` classes use site 0 of each channel.
    pub fn readout_index(&self, class: usize) -> usize {
        let ch = class % self.channels;
        let x = class / self.channels;
        ch * self.grid_size + x
    }
}
