//! Experiment pipeline behind the `phasenet` binary: synthetic data,
//! subsampling masks, amortised GP preprocessing, training sweeps, σ-curve
//! export and the JSON/text formats used by the subcommands.

use phasenet_core::gaussian::StateError;
use phasenet_core::gp::GpError;
use phasenet_core::net::NetError;
use phasenet_core::symplectic::LinalgError;
use phasenet_photonic::CompileError;
use thiserror::Error;

pub mod compile;
pub mod config;
pub mod data;
pub mod experiment;
pub mod io;
pub mod sigma_curve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),
}

impl HarnessError {
    /// 0 success, 1 i/o, 2 validation, 3 numerical, 4 non-Gaussian gate.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) => 1,
            HarnessError::Validation(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::UnsupportedGate(_) => 4,
        }
    }
}

fn linalg_is_input(e: &LinalgError) -> bool {
    matches!(e, LinalgError::Dimension(..) | LinalgError::NotSymmetric(..) | LinalgError::NotHermitian(..))
}

impl From<LinalgError> for HarnessError {
    fn from(e: LinalgError) -> Self {
        if linalg_is_input(&e) {
            HarnessError::Validation(e.to_string())
        } else {
            HarnessError::Numerical(e.to_string())
        }
    }
}

impl From<StateError> for HarnessError {
    fn from(e: StateError) -> Self {
        match &e {
            StateError::Linalg(l) => l.clone().into(),
            StateError::Conditioning(_) => HarnessError::Numerical(e.to_string()),
            _ => HarnessError::Validation(e.to_string()),
        }
    }
}

impl From<GpError> for HarnessError {
    fn from(e: GpError) -> Self {
        match e {
            GpError::Linalg(l) => l.into(),
            GpError::State(s) => s.into(),
            GpError::Kernel(_) | GpError::Series(_) => HarnessError::Validation(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<NetError> for HarnessError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Linalg(l) => l.into(),
            NetError::Gp(g) => g.into(),
            NetError::Config(_) | NetError::Dimension(_) => HarnessError::Validation(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<CompileError> for HarnessError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Linalg(l) => l.into(),
            CompileError::State(s) => s.into(),
            CompileError::UnsupportedGate { .. } => HarnessError::UnsupportedGate(e.to_string()),
            CompileError::Domain { .. } => HarnessError::Numerical(e.to_string()),
            _ => HarnessError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
