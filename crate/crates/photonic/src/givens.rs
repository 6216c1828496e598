//! Reck-style decomposition of passive (orthogonal-symplectic) maps into
//! nearest-neighbour rotations and single-mode phases.
//!
//! An orthogonal-symplectic `K = [[X, Y], [-Y, X]]` acts on `α = φ + iπ` as
//! the unitary `U = X - iY`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::gate::Gate;
use crate::CompileError;

/// Default tolerance on `KᵀK = I` and the block structure.
pub const PASSIVE_TOL: f64 = 1e-8;

pub fn orthogonal_symplectic_to_unitary(k: &DMatrix<f64>, tol: f64) -> Result<DMatrix<Complex64>, CompileError> {
    let n = k.nrows();
    if n != k.ncols() || n % 2 != 0 || n == 0 {
        return Err(CompileError::Invalid(format!("expected a square even matrix, got {}x{}", k.nrows(), k.ncols())));
    }
    let m = n / 2;
    let x = k.view((0, 0), (m, m));
    let y = k.view((0, m), (m, m));
    let block = (k.view((m, 0), (m, m)) + y).amax().max((k.view((m, m), (m, m)) - x).amax());
    let orth = (k.transpose() * k - DMatrix::identity(n, n)).amax();
    let residual = block.max(orth);
    if !(residual <= tol) {
        return Err(CompileError::NotOrthogonalSymplectic(residual));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| Complex64::new(x[(i, j)], -y[(i, j)])))
}

pub fn unitary_to_orthogonal_symplectic(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mut k = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let (x, y) = (u[(i, j)].re, -u[(i, j)].im);
            k[(i, j)] = x;
            k[(i, m + j)] = y;
            k[(m + i, j)] = -y;
            k[(m + i, m + j)] = x;
        }
    }
    k
}

/// Reduce an angle modulo `π` into `(-π/2, π/2]`.
fn reduce_half_turn(a: f64) -> f64 {
    let mut r = a.rem_euclid(PI);
    if r > PI / 2.0 {
        r -= PI;
    }
    r
}

fn rotate_rows(u: &mut DMatrix<Complex64>, p: usize, q: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    for col in 0..u.ncols() {
        let (a, b) = (u[(p, col)], u[(q, col)]);
        u[(p, col)] = a * c - b * s;
        u[(q, col)] = a * s + b * c;
    }
}

fn phase_row(u: &mut DMatrix<Complex64>, q: usize, delta: f64) {
    let ph = Complex64::from_polar(1.0, delta);
    for col in 0..u.ncols() {
        u[(q, col)] *= ph;
    }
}

/// Gates, in time order, whose product is `K`.
///
/// Each subdiagonal entry is cleared with a phase on the lower row followed by
/// a real rotation of the adjacent pair; the residual diagonal becomes
/// single-mode phases. Gates are not pruned.
pub fn givens_decompose(k: &DMatrix<f64>, tol: f64) -> Result<Vec<Gate>, CompileError> {
    let mut u = orthogonal_symplectic_to_unitary(k, tol)?;
    let m = u.nrows();
    let mut steps = Vec::new();
    for c in 0..m {
        for r in (c + 1..m).rev() {
            let (p, q) = (r - 1, r);
            let (a, b) = (u[(p, c)], u[(q, c)]);
            let arg_a = if a.norm() > 0.0 { a.arg() } else { 0.0 };
            let delta = if b.norm() > 0.0 { reduce_half_turn(arg_a - b.arg()) } else { 0.0 };
            phase_row(&mut u, q, delta);
            let t = (u[(q, c)] * Complex64::from_polar(1.0, -arg_a)).re;
            let theta = (-t).atan2(a.norm());
            rotate_rows(&mut u, p, q, theta);
            u[(q, c)] = Complex64::new(0.0, 0.0);
            steps.push((p, q, theta, delta));
        }
    }
    let mut gates: Vec<Gate> = (0..m).map(|i| Gate::Phase { i, theta: u[(i, i)].arg() }).collect();
    for &(p, q, theta, delta) in steps.iter().rev() {
        gates.push(Gate::Rotation2 { i: p, j: q, theta: -theta });
        gates.push(Gate::Phase { i: q, theta: -delta });
    }
    Ok(gates)
}
