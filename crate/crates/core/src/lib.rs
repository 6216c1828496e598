//! Gaussian-level simulation of phase-space neural networks.
//!
//! The crate is layered bottom-up:
//!
//! * [`symplectic`]: the form `J`, matrix exponentials and their Fréchet
//!   derivatives, Cholesky factors, Hermitian eigenvalues.
//! * [`gaussian`]: Gaussian states, their transformation laws, and
//!   conditioning on position measurements.
//! * [`gp`]: Gaussian-process interpolation of irregular series and the
//!   embedding of a posterior into a Gaussian state.
//! * [`net`]: Monte-Carlo networks (`bnn`, `pnn`, `spnn`) built from
//!   symplectic layers and classical flows, with training.
//!
//! Covariances are stored in Born convention: the vacuum has `C = 1` and a
//! valid state satisfies `C + iJ ⪰ 0`.

pub mod gaussian;
pub mod gp;
pub mod net;
pub mod rng;
pub mod symplectic;

pub use gaussian::{GaussianState, MeasurementRecord, StateError};
pub use gp::{GpError, GpPosterior, IrregularSeries, KernelFamily, KernelSpec};
pub use symplectic::{BlockGenerator, LinalgError, PhaseDim};
