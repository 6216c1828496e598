//! Softplus as a Trotterised flow of `H = π f(φ)` with `f(x) = β⁻¹e^{-βx}`.
//!
//! `f` is truncated to `Σ_{ℓ≤k} f_ℓ φ^ℓ`, and each monomial flow `π φ^ℓ` is
//! built recursively: `H₀ = π` is a momentum shift, and `H_{ℓ+1}` comes from
//! the group commutator `W V W† V†` of a `π²` gate `W` with the
//! cubic-phase conjugation `V = φ³ · H_ℓ† · φ³† · H_ℓ`.

use crate::gate::{Gate, GateProgram, ProgramMeta, Source};
use crate::CompileError;

/// `f_ℓ = β^{ℓ-1} (-1)^ℓ / ℓ!` for `ℓ = 0..=k`.
pub fn softplus_taylor_coefficients(beta: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut c = 1.0 / beta;
    for l in 0..=k {
        if l > 0 {
            c *= -beta / l as f64;
        }
        out.push(c);
    }
    out
}

/// Elementary gates in the order-`ℓ` gadget: `3·4^ℓ - 2`.
pub fn order_gate_count(l: usize) -> u64 {
    (0..l).fold(1u64, |n, _| 6 + 4 * n)
}

/// Gates emitted by [`compile_nonlinearity`].
pub fn gate_count(k: usize, m: usize) -> u64 {
    2 * m as u64 * (0..=k).map(order_gate_count).sum::<u64>()
}

fn reversed_inverse(gates: &[Gate]) -> Vec<Gate> {
    gates.iter().rev().map(Gate::inverse).collect()
}

/// Time-ordered gates approximating `exp(-i t H_ℓ)` on mode 0.
fn gadget(l: usize, t: f64) -> Vec<Gate> {
    if l == 0 {
        return vec![Gate::MomentumShift { i: 0, eps: t }];
    }
    if t < 0.0 {
        return reversed_inverse(&gadget(l, -t));
    }
    let prev = l - 1;
    let alpha = -1.0 / (4.0 * (prev + 2) as f64);
    let w = vec![Gate::MomentumSquare { i: 0, eps: alpha * t.sqrt() }];
    let delta = t.powf(0.25);
    let u = gadget(prev, delta);
    // V = cubic(-δ) U† cubic(δ) U as an operator product; time order is reversed.
    let mut v = u.clone();
    v.push(Gate::CubicPhase { i: 0, eps: delta });
    v.extend(reversed_inverse(&u));
    v.push(Gate::CubicPhase { i: 0, eps: -delta });
    // W V W† V†, again reversed into time order.
    let mut out = reversed_inverse(&v);
    out.extend(reversed_inverse(&w));
    out.extend(v);
    out.extend(w);
    out
}

/// `m` palindromic sweeps over orders `0..=k`, each order run for `ε f_ℓ`.
pub fn compile_nonlinearity(k: usize, eps: f64, m: usize, beta: f64) -> Result<GateProgram, CompileError> {
    if m == 0 || !(eps > 0.0) || !eps.is_finite() || !(beta > 0.0) || !beta.is_finite() {
        return Err(CompileError::Invalid(format!("need m ≥ 1, ε > 0, β > 0 (got m={m}, ε={eps}, β={beta})")));
    }
    let coeffs = softplus_taylor_coefficients(beta, k);
    let sweep: Vec<Gate> = (0..=k).chain((0..=k).rev()).flat_map(|l| gadget(l, eps * coeffs[l])).collect();
    let mut gates = Vec::with_capacity(sweep.len() * m);
    for _ in 0..m {
        gates.extend_from_slice(&sweep);
    }
    GateProgram::new(1, gates, ProgramMeta { source: Source::Nonlinear, k, eps, m_reps: m })
}

/// Exact time-`α` flow of `φ' = φ^ℓ`.
pub fn h_flow(l: usize, alpha: f64, x: f64) -> Result<f64, CompileError> {
    match l {
        0 => Ok(x + alpha),
        1 => Ok(alpha.exp() * x),
        _ => {
            let p = (l - 1) as f64;
            let q = 1.0 - p * alpha * x.powi(l as i32 - 1);
            if q <= 0.0 || !q.is_finite() {
                return Err(CompileError::Domain { order: l, x });
            }
            Ok(x * q.powf(-1.0 / p))
        }
    }
}

/// `m` repetitions of `h_0 ∘ … ∘ h_k ∘ h_k ∘ … ∘ h_0` with `α_ℓ = ε(-1)^ℓ/ℓ!`.
pub fn truncated_sigma(k: usize, eps: f64, m: usize, x: f64) -> Result<f64, CompileError> {
    let alphas: Vec<f64> = softplus_taylor_coefficients(1.0, k).iter().map(|c| eps * c).collect();
    let mut y = x;
    for _ in 0..m {
        for l in (0..=k).chain((0..=k).rev()) {
            y = h_flow(l, alphas[l], y)?;
        }
    }
    Ok(y)
}
