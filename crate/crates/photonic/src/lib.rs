//! Compilation of phase-space layers into optical gate programs.
//!
//! Linear layers go through Bloch–Messiah and Givens decompositions into
//! beam splitters, phases, single-mode squeezers and displacements. The
//! scalar nonlinearity `softplus` is approximated by Trotterised flows of
//! `π φ^ℓ`, each built from nested commutators of `π²` and cubic-phase gates.

use phasenet_core::gaussian::StateError;
use phasenet_core::symplectic::LinalgError;
use thiserror::Error;

pub mod bloch_messiah;
pub mod gate;
pub mod givens;
pub mod linear;
pub mod nonlinear;

pub use bloch_messiah::{bloch_messiah, BlochMessiah};
pub use gate::{simulate_gaussian, Gate, GateCounts, GateProgram, ProgramMeta, Source};
pub use givens::{givens_decompose, orthogonal_symplectic_to_unitary, unitary_to_orthogonal_symplectic};
pub use linear::{compile_linear, LinearCompilation};
pub use nonlinear::{
    compile_nonlinearity, gate_count, h_flow, order_gate_count, softplus_taylor_coefficients, truncated_sigma,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("matrix is not symplectic (residual {0:e})")]
    NotSymplectic(f64),
    #[error("matrix is not orthogonal-symplectic (residual {0:e})")]
    NotOrthogonalSymplectic(f64),
    #[error("gate {index} ({kind}) is not Gaussian")]
    UnsupportedGate { index: usize, kind: &'static str },
    #[error("gate {index} touches mode {mode} of a {modes}-mode program")]
    ModeRange { index: usize, mode: usize, modes: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("flow of order {order} leaves its domain at x = {x}")]
    Domain { order: usize, x: f64 },
    #[error("{0}")]
    Invalid(String),
}
