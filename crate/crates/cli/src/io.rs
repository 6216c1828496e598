//! JSON records exchanged by the subcommands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use phasenet_core::gp::KernelSpec;
use phasenet_core::net::{LayerParams, Model, NetConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Trained network plus the GP preprocessing it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub noise: f64,
    pub layers: Vec<LayerParams>,
}

impl Checkpoint {
    pub fn new(model: &Model, seed: u64, kernel: KernelSpec, noise: f64) -> Self {
        Self { config: model.config.clone(), seed, kernel, noise, layers: model.layers.clone() }
    }

    pub fn model(&self) -> Result<Model, HarnessError> {
        let m = Model { config: self.config.clone(), layers: self.layers.clone() };
        m.validate()?;
        Ok(m)
    }
}

/// Input of `compile-linear`: `z ↦ S z + ξ` with `S` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayerRecord {
    pub modes: usize,
    pub symplectic: Vec<f64>,
    pub displacement: Vec<f64>,
}

impl LinearLayerRecord {
    pub fn new(s: &DMatrix<f64>, xi: &DVector<f64>) -> Self {
        Self { modes: s.nrows() / 2, symplectic: s.transpose().as_slice().to_vec(), displacement: xi.as_slice().to_vec() }
    }

    pub fn matrices(&self) -> Result<(DMatrix<f64>, DVector<f64>), HarnessError> {
        let n = 2 * self.modes;
        if self.modes == 0 || self.symplectic.len() != n * n || self.displacement.len() != n {
            return Err(HarnessError::Validation(format!(
                "{} modes need a {n}x{n} matrix and {n} displacements, got {} and {}",
                self.modes,
                self.symplectic.len(),
                self.displacement.len()
            )));
        }
        Ok((DMatrix::from_row_slice(n, n, &self.symplectic), DVector::from_column_slice(&self.displacement)))
    }
}
