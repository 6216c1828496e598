//! Dense linear algebra on a `2M`-dimensional phase space.
//!
//! Coordinates are ordered with the whole position (φ) block first and the
//! momentum (π) block second, so the symplectic form is
//! `J = [[0, 1_M], [-1_M, 0]]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular")]
    Singular,
}

/// Number of (φ, π) pairs in a phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDim {
    modes: usize,
}

impl PhaseDim {
    pub fn new(modes: usize) -> Result<Self, LinalgError> {
        if modes == 0 {
            return Err(LinalgError::Dimension("phase space needs at least one mode".into()));
        }
        Ok(Self { modes })
    }

    /// Infer the mode count from the side of a `2M x 2M` matrix.
    pub fn from_phase_len(len: usize) -> Result<Self, LinalgError> {
        if len == 0 || len % 2 != 0 {
            return Err(LinalgError::Dimension(format!(
                "phase-space dimension must be even and positive, got {len}"
            )));
        }
        Self::new(len / 2)
    }

    pub fn modes(self) -> usize {
        self.modes
    }

    pub fn phase_len(self) -> usize {
        2 * self.modes
    }
}

/// Learnable blocks `(A, B, C)` of a Hamiltonian generator.
///
/// The generator is `X = [[A, sym(B)], [sym(C), -Aᵀ]]`; symmetrization happens
/// on construction, so the raw blocks are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGenerator {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl BlockGenerator {
    pub fn zeros(modes: usize) -> Self {
        Self {
            a: DMatrix::zeros(modes, modes),
            b: DMatrix::zeros(modes, modes),
            c: DMatrix::zeros(modes, modes),
        }
    }

    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, LinalgError> {
        let m = a.nrows();
        for (name, blk) in [("a", &a), ("b", &b), ("c", &c)] {
            if blk.nrows() != m || blk.ncols() != m {
                return Err(LinalgError::Dimension(format!(
                    "block {name} is {}x{}, expected {m}x{m}",
                    blk.nrows(),
                    blk.ncols()
                )));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn modes(&self) -> usize {
        self.a.nrows()
    }

    /// True when `B = C = 0`, i.e. the generator never mixes φ with π.
    pub fn is_block_diagonal(&self) -> bool {
        self.b.iter().all(|v| *v == 0.0) && self.c.iter().all(|v| *v == 0.0)
    }

    /// Assemble the `2M x 2M` Lie-algebra element.
    pub fn generator(&self) -> DMatrix<f64> {
        let m = self.modes();
        let mut x = DMatrix::zeros(2 * m, 2 * m);
        x.view_mut((0, 0), (m, m)).copy_from(&self.a);
        x.view_mut((0, m), (m, m)).copy_from(&symmetrize(&self.b));
        x.view_mut((m, 0), (m, m)).copy_from(&symmetrize(&self.c));
        x.view_mut((m, m), (m, m)).copy_from(&(-self.a.transpose()));
        x
    }
}

pub fn symmetrize(z: &DMatrix<f64>) -> DMatrix<f64> {
    (z + z.transpose()) * 0.5
}

pub fn symplectic_form(dim: PhaseDim) -> DMatrix<f64> {
    let m = dim.modes();
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// Outcome of a symplecticity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticCheck {
    /// `‖S J Sᵀ − J‖∞` (max-abs entry).
    pub residual: f64,
    pub ok: bool,
}

pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> Result<SymplecticCheck, LinalgError> {
    if s.nrows() != s.ncols() {
        return Err(LinalgError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let dim = PhaseDim::from_phase_len(s.nrows())?;
    let j = symplectic_form(dim);
    let residual = max_abs(&(s * &j * s.transpose() - &j));
    Ok(SymplecticCheck { residual, ok: residual <= tol })
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn require_square_finite(x: &DMatrix<f64>) -> Result<(), LinalgError> {
    if x.nrows() != x.ncols() {
        return Err(LinalgError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

// Padé(13) numerator coefficients and the matching scaling threshold.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn scaling_exponent(norm: f64) -> i32 {
    if norm <= THETA13 {
        0
    } else {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    }
}

/// Matrix exponential by scaling and squaring around a Padé(13) core.
pub fn matrix_exp(x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    require_square_finite(x)?;
    let n = x.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let s = scaling_exponent(one_norm(x));
    let a = x * 2f64.powi(-s);
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let w1 = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let w2 = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let z1 = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let z2 = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let u = &a * (&a6 * w1 + w2);
    let v = &a6 * z1 + z2;
    let lu = (&v - &u).lu();
    let mut r = lu.solve(&(&v + &u)).ok_or(LinalgError::Singular)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(r)
}

/// `exp(X)` together with the Fréchet derivative `L(X, E)`, i.e. the
/// directional derivative of the exponential at `X` along `E`.
///
/// Differentiates the same scaling-and-squaring Padé(13) recipe as
/// [`matrix_exp`] (Al-Mohy & Higham, 2009).
pub fn expm_frechet(
    x: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    require_square_finite(x)?;
    require_square_finite(e)?;
    if x.shape() != e.shape() {
        return Err(LinalgError::Dimension("direction must match the matrix shape".into()));
    }
    let n = x.nrows();
    let s = scaling_exponent(one_norm(x));
    let scale = 2f64.powi(-s);
    let a = x * scale;
    let e = e * scale;
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);

    let a2 = &a * &a;
    let m2 = &a * &e + &e * &a;
    let a4 = &a2 * &a2;
    let m4 = &a2 * &m2 + &m2 * &a2;
    let a6 = &a2 * &a4;
    let m6 = &a4 * &m2 + &m4 * &a2;

    let w1 = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let w2 = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let z1 = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let z2 = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let w = &a6 * &w1 + w2;
    let u = &a * &w;
    let v = &a6 * &z1 + z2;

    let lw1 = &m6 * b[13] + &m4 * b[11] + &m2 * b[9];
    let lw2 = &m6 * b[7] + &m4 * b[5] + &m2 * b[3];
    let lz1 = &m6 * b[12] + &m4 * b[10] + &m2 * b[8];
    let lz2 = &m6 * b[6] + &m4 * b[4] + &m2 * b[2];
    let lw = &a6 * lw1 + &m6 * &w1 + lw2;
    let lu_ = &a * lw + &e * &w;
    let lv = &a6 * lz1 + &m6 * &z1 + lz2;

    let lu = (&v - &u).lu();
    let mut r = lu.solve(&(&v + &u)).ok_or(LinalgError::Singular)?;
    let rhs = &lu_ + &lv + (&lu_ - &lv) * &r;
    let mut l = lu.solve(&rhs).ok_or(LinalgError::Singular)?;
    for _ in 0..s {
        l = &r * &l + &l * &r;
        r = &r * &r;
    }
    if r.iter().chain(l.iter()).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok((r, l))
}

/// Pull a gradient `∂f/∂exp(X)` back to `∂f/∂X`.
///
/// Uses `⟨G, L(X, E)⟩ = ⟨L(Xᵀ, G), E⟩`.
pub fn expm_pullback(x: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (_, l) = expm_frechet(&x.transpose(), grad_out)?;
    Ok(l)
}

/// `S = exp([[A, sym(B)], [sym(C), -Aᵀ]])`.
pub fn symplectic_from_generator(g: &BlockGenerator) -> Result<DMatrix<f64>, LinalgError> {
    matrix_exp(&g.generator())
}

fn asymmetry(p: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..p.nrows() {
        for j in (i + 1)..p.ncols() {
            worst = worst.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    worst
}

/// Lower-triangular `L` with `L Lᵀ = p`.
pub fn cholesky(p: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    require_square_finite(p)?;
    let scale = max_abs(p).max(1.0);
    let asym = asymmetry(p);
    if asym > 1e-10 * scale {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let n = p.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = p[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

pub const DEFAULT_JITTER: f64 = 1e-8;

/// Cholesky factor, retrying once with `jitter·1` added to the diagonal.
///
/// Returns the factor and the jitter that was actually applied (zero when
/// the first attempt succeeded).
pub fn cholesky_jittered(p: &DMatrix<f64>, jitter: f64) -> Result<(DMatrix<f64>, f64), LinalgError> {
    match cholesky(p) {
        Ok(l) => Ok((l, 0.0)),
        Err(LinalgError::NotPositiveDefinite { .. }) if jitter > 0.0 => {
            let n = p.nrows();
            let shifted = p + DMatrix::<f64>::identity(n, n) * jitter;
            cholesky(&shifted).map(|l| (l, jitter))
        }
        Err(e) => Err(e),
    }
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n)).ok_or(LinalgError::Singular)
}

/// Solve `p x = b` given the Cholesky factor of `p`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let y = l.solve_lower_triangular(b).ok_or(LinalgError::Singular)?;
    l.tr_solve_lower_triangular(&y).ok_or(LinalgError::Singular)
}

pub fn hermitian_min_eigenvalue(h: &DMatrix<Complex64>) -> Result<f64, LinalgError> {
    if h.nrows() != h.ncols() {
        return Err(LinalgError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let scale = h.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
    let mut asym = 0.0_f64;
    for i in 0..h.nrows() {
        for j in i..h.ncols() {
            asym = asym.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    if asym > 1e-10 * scale {
        return Err(LinalgError::NotHermitian(asym));
    }
    if h.nrows() == 0 {
        return Err(LinalgError::Dimension("empty matrix has no eigenvalues".into()));
    }
    let eig = h.clone().symmetric_eigenvalues();
    Ok(eig.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `C + iJ` for a real phase-space covariance.
pub fn uncertainty_matrix(c: &DMatrix<f64>) -> Result<DMatrix<Complex64>, LinalgError> {
    let dim = PhaseDim::from_phase_len(c.nrows())?;
    let j = symplectic_form(dim);
    Ok(DMatrix::from_fn(c.nrows(), c.ncols(), |r, k| {
        Complex64::new(c[(r, k)], j[(r, k)])
    }))
}

/// Direct sum `a ⊕ b` as a block-diagonal matrix.
pub fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
