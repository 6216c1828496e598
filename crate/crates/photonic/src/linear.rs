//! Affine symplectic maps `z ↦ S z + ξ` as gate programs.

use nalgebra::{DMatrix, DVector};

use crate::bloch_messiah::{bloch_messiah, BlochMessiah};
use crate::gate::{Gate, GateCounts, GateProgram, ProgramMeta};
use crate::givens::{givens_decompose, PASSIVE_TOL};
use crate::CompileError;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCompilation {
    /// Pruned program.
    pub program: GateProgram,
    pub counts: GateCounts,
    pub decomposition: BlochMessiah,
}

/// Passive part `L`, then squeezers, then passive part `K`, then displacements.
pub fn compile_linear(s: &DMatrix<f64>, xi: &DVector<f64>) -> Result<LinearCompilation, CompileError> {
    if xi.len() != s.nrows() {
        return Err(CompileError::Invalid(format!("displacement has length {}, expected {}", xi.len(), s.nrows())));
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(CompileError::Invalid("displacement is not finite".into()));
    }
    let bm = bloch_messiah(s)?;
    let m = bm.squeezing.len();
    let mut gates = givens_decompose(&bm.l, PASSIVE_TOL)?;
    gates.extend(bm.squeezing.iter().enumerate().map(|(i, &r)| Gate::Squeeze { i, r }));
    gates.extend(givens_decompose(&bm.k, PASSIVE_TOL)?);
    gates.extend((0..m).map(|i| Gate::Displace { i, dphi: xi[i], dpi: xi[m + i] }));
    let (program, counts) = GateProgram::new(m, gates, ProgramMeta::linear())?.pruned();
    Ok(LinearCompilation { program, counts, decomposition: bm })
}
