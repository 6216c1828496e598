//! Glue for the compiler subcommands.

use nalgebra::{DMatrix, DVector};
use phasenet_core::gaussian::GaussianState;
use phasenet_core::rng;
use phasenet_core::symplectic::{is_symplectic, symplectic_from_generator, BlockGenerator, PhaseDim};
use phasenet_photonic::{simulate_gaussian, GateProgram};
use rand::Rng;

use crate::HarnessError;

/// Tolerance `verify-program` applies to mean and covariance entries.
pub const VERIFY_TOL: f64 = 1e-6;

/// `exp(X)` for generator blocks `U(-0.5, 0.5)` and a displacement `U(-1, 1)`.
pub fn random_linear_layer(modes: usize, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>), HarnessError> {
    let mut r = rng::seeded(seed);
    let mut block = || DMatrix::from_fn(modes, modes, |_, _| r.random_range(-0.5..0.5));
    let gen = BlockGenerator::new(block(), block(), block())?;
    let s = symplectic_from_generator(&gen)?;
    let xi = DVector::from_fn(2 * modes, |_, _| r.random_range(-1.0..1.0));
    Ok((s, xi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub gates: usize,
    pub counts: Vec<(&'static str, usize)>,
    /// `‖S J Sᵀ - J‖∞` of the program's net linear part.
    pub symplectic_residual: f64,
    /// Max entry deviation from the reference layer on the vacuum, if given.
    pub mean_residual: Option<f64>,
    pub cov_residual: Option<f64>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.symplectic_residual <= VERIFY_TOL
            && self.mean_residual.is_none_or(|r| r <= VERIFY_TOL)
            && self.cov_residual.is_none_or(|r| r <= VERIFY_TOL)
    }
}

const KINDS: [&str; 7] =
    ["ROTATION2", "PHASE", "SQUEEZE", "DISPLACE", "MOMENTUM_SHIFT", "MOMENTUM_SQUARE", "CUBIC_PHASE"];

/// Simulate the program on the vacuum and compare with `reference` if given.
pub fn verify_program(
    program: &GateProgram,
    reference: Option<&(DMatrix<f64>, DVector<f64>)>,
) -> Result<VerifyReport, HarnessError> {
    let counts = KINDS.iter().map(|&k| (k, program.count(k))).collect();
    let vacuum = GaussianState::vacuum(PhaseDim::new(program.modes)?);
    let sim = simulate_gaussian(program, &vacuum)?;
    let (s, _) = program.affine_map()?;
    let symplectic_residual = is_symplectic(&s, VERIFY_TOL)?.residual;
    let (mean_residual, cov_residual) = match reference {
        Some((s_ref, xi)) => {
            if s_ref.nrows() != 2 * program.modes {
                return Err(HarnessError::Validation(format!(
                    "reference layer has {} modes, program has {}",
                    s_ref.nrows() / 2,
                    program.modes
                )));
            }
            let direct = vacuum.apply_symplectic(s_ref)?.displace(xi)?;
            (Some((sim.mean() - direct.mean()).amax()), Some((sim.cov() - direct.cov()).amax()))
        }
        None => (None, None),
    };
    Ok(VerifyReport { gates: program.len(), counts, symplectic_residual, mean_residual, cov_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasenet_photonic::{compile_linear, compile_nonlinearity};

    #[test]
    fn compiled_layers_verify() {
        let layer = random_linear_layer(3, 4).unwrap();
        let c = compile_linear(&layer.0, &layer.1).unwrap();
        let rep = verify_program(&c.program, Some(&layer)).unwrap();
        assert!(rep.ok(), "{rep:?}");
        assert_eq!(rep.counts.iter().map(|c| c.1).sum::<usize>(), rep.gates);
    }

    #[test]
    fn wrong_reference_fails() {
        let layer = random_linear_layer(2, 1).unwrap();
        let other = random_linear_layer(2, 2).unwrap();
        let c = compile_linear(&layer.0, &layer.1).unwrap();
        assert!(!verify_program(&c.program, Some(&other)).unwrap().ok());
    }

    #[test]
    fn nonlinear_programs_are_rejected() {
        let p = compile_nonlinearity(1, 0.1, 1, 1.0).unwrap();
        assert_eq!(verify_program(&p, None).unwrap_err().exit_code(), 4);
    }
}
