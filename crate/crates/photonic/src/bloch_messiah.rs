//! `S = K Σ L` with `K, L` orthogonal-symplectic and
//! `Σ = diag(e^{r}, e^{-r})`, `r` sorted in descending order.
//!
//! `SᵀS` is symmetric, symplectic and positive definite, so its spectrum comes
//! in pairs `(d, 1/d)` and `J` maps the `d`-eigenspace onto the `1/d` one. An
//! orthonormal basis `U` of the `d ≥ 1` half that is isotropic (`UᵀJU = 0`)
//! gives `W = [U | -JU]`, orthogonal and symplectic, with `WᵀSᵀSW = Σ²`.
//! Then `L = Wᵀ` and `K = S W Σ⁻¹`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use phasenet_core::symplectic::{is_symplectic, max_abs, symmetrize, symplectic_form, PhaseDim};

use crate::CompileError;

/// Relative gap below which eigenvalues of `SᵀS` share a cluster.
const CLUSTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BlochMessiah {
    pub k: DMatrix<f64>,
    /// Squeezing parameters, non-negative and descending.
    pub squeezing: Vec<f64>,
    pub l: DMatrix<f64>,
}

impl BlochMessiah {
    pub fn sigma(&self) -> DMatrix<f64> {
        let m = self.squeezing.len();
        DMatrix::from_diagonal(&DVector::from_fn(2 * m, |i, _| {
            if i < m {
                self.squeezing[i].exp()
            } else {
                (-self.squeezing[i - m]).exp()
            }
        }))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.k * self.sigma() * &self.l
    }
}

/// Tolerance used to accept `S` as symplectic, relative to `‖S‖²`.
pub fn symplectic_tol(s: &DMatrix<f64>) -> f64 {
    1e-8 * max_abs(s).powi(2).max(1.0)
}

/// Greedy Gram–Schmidt on the projections of the standard basis onto the
/// column span of `v`, largest residual first. With `pair_with`, every
/// accepted vector `u` also removes `pair_with · u` from the pool.
fn pivoted_basis(v: &DMatrix<f64>, count: usize, pair_with: Option<&DMatrix<f64>>) -> Vec<DVector<f64>> {
    let n = v.nrows();
    let proj = v * v.transpose();
    let mut cands: Vec<DVector<f64>> = (0..n).map(|k| proj.column(k).into_owned()).collect();
    let mut out = Vec::with_capacity(count);
    let deflate = |cands: &mut Vec<DVector<f64>>, u: &DVector<f64>| {
        for c in cands.iter_mut() {
            let d = u.dot(c);
            c.axpy(-d, u, 1.0);
        }
    };
    for _ in 0..count {
        let mut best = 0;
        for (k, c) in cands.iter().enumerate() {
            if c.norm() > cands[best].norm() * (1.0 + 1e-12) {
                best = k;
            }
        }
        let u = &cands[best] / cands[best].norm();
        deflate(&mut cands, &u);
        if let Some(j) = pair_with {
            let w = j * &u;
            let w = &w / w.norm();
            deflate(&mut cands, &w);
        }
        out.push(u);
    }
    out
}

pub fn bloch_messiah(s: &DMatrix<f64>) -> Result<BlochMessiah, CompileError> {
    let dim = PhaseDim::from_phase_len(s.nrows())?;
    let m = dim.modes();
    let check = is_symplectic(s, symplectic_tol(s))?;
    if !check.ok {
        return Err(CompileError::NotSymplectic(check.residual));
    }
    let p = symmetrize(&(s.transpose() * s));
    let eig = SymmetricEigen::new(p.clone());
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let col = |k: usize| eig.eigenvectors.column(order[k]).into_owned();

    let n_large = lam.iter().take(m).filter(|&&l| l > 1.0 + CLUSTER_TOL).count();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut start = 0;
    while start < n_large {
        let mut end = start + 1;
        while end < n_large && lam[end - 1] - lam[end] <= CLUSTER_TOL * lam[end - 1] {
            end += 1;
        }
        let v = DMatrix::from_columns(&(start..end).map(col).collect::<Vec<_>>());
        basis.extend(pivoted_basis(&v, end - start, None));
        start = end;
    }
    let j = symplectic_form(dim);
    let minus_j = -&j;
    if n_large < m {
        let v = DMatrix::from_columns(&(n_large..2 * m - n_large).map(col).collect::<Vec<_>>());
        basis.extend(pivoted_basis(&v, m - n_large, Some(&minus_j)));
    }

    let mut w = DMatrix::zeros(2 * m, 2 * m);
    let mut squeezing = Vec::with_capacity(m);
    for (i, u) in basis.iter().enumerate() {
        w.set_column(i, u);
        w.set_column(m + i, &(&minus_j * u));
        squeezing.push((0.5 * u.dot(&(&p * u)).ln()).max(0.0));
    }
    let mut sigma_inv = DVector::zeros(2 * m);
    for i in 0..m {
        sigma_inv[i] = (-squeezing[i]).exp();
        sigma_inv[m + i] = squeezing[i].exp();
    }
    let k = s * &w * DMatrix::from_diagonal(&sigma_inv);
    Ok(BlochMessiah { k, squeezing, l: w.transpose() })
}
