//! Gaussian-process interpolation of irregularly sampled series.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussianState, StateError};
use crate::rng;
use crate::symplectic::{
    cholesky, cholesky_jittered, direct_sum, lower_triangular_inverse, LinalgError, PhaseDim,
    DEFAULT_JITTER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("invalid series: {0}")]
    Series(String),
    #[error("observation covariance is singular ({0})")]
    Singular(LinalgError),
    #[error("hyperparameter fit diverged; last finite iterate {last:?}")]
    Divergence { last: KernelSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Exponential (Matérn ν = 1/2) kernel `v·exp(-|x-x'|/ℓ)`.
    MaternHalf,
    /// Squared exponential `v·exp(-(x-x')²/(2ℓ²))`.
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub variance: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, variance: f64) -> Result<Self, GpError> {
        let s = Self { family, lengthscale, variance };
        s.validate()?;
        Ok(s)
    }

    pub fn matern_half(lengthscale: f64, variance: f64) -> Result<Self, GpError> {
        Self::new(KernelFamily::MaternHalf, lengthscale, variance)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lengthscale) || !ok(self.variance) {
            return Err(GpError::Kernel(format!(
                "hyperparameters must be positive and finite (lengthscale {}, variance {})",
                self.lengthscale, self.variance
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs() / self.lengthscale;
        match self.family {
            KernelFamily::MaternHalf => self.variance * (-d).exp(),
            KernelFamily::Rbf => self.variance * (-0.5 * d * d).exp(),
        }
    }

    fn log_params(&self) -> [f64; 2] {
        [self.lengthscale.ln(), self.variance.ln()]
    }

    fn with_log_params(&self, p: [f64; 2]) -> Self {
        Self { family: self.family, lengthscale: p[0].exp(), variance: p[1].exp() }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { family: KernelFamily::MaternHalf, lengthscale: 0.2, variance: 1.0 }
    }
}

pub const DEFAULT_NOISE: f64 = 1e-2;

pub fn kernel_matrix(spec: &KernelSpec, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>, GpError> {
    spec.validate()?;
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| spec.eval(xs[i], ys[j])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularSeries {
    pub locations: Vec<f64>,
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

impl IrregularSeries {
    pub fn new(locations: Vec<f64>, values: Vec<f64>, label: Option<usize>) -> Result<Self, GpError> {
        let s = Self { locations, values, label };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.locations.len() != self.values.len() {
            return Err(GpError::Series(format!(
                "{} locations but {} values",
                self.locations.len(),
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(GpError::Series("non-finite value".into()));
        }
        if self.locations.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(GpError::Series("locations must lie in [0, 1]".into()));
        }
        if self.locations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GpError::Series("locations must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` evenly spaced points covering `[0, 1]` inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub grid: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Lower-triangular `L` with `L Lᵀ = cov + jitter·1`.
    pub chol_cov: DMatrix<f64>,
    /// Lower-triangular factor of the inverse of `cov + jitter·1`.
    pub chol_prec: DMatrix<f64>,
    /// Diagonal jitter applied before factorizing (zero if none was needed).
    pub jitter: f64,
}

/// JSON shape `{grid, mean, cov: [row-major ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GpPosterior {
    /// Attach both factors to a mean/covariance pair.
    pub fn from_moments(grid: Vec<f64>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, GpError> {
        let n = grid.len();
        if mean.len() != n || cov.shape() != (n, n) {
            return Err(GpError::Series(format!("posterior moments do not match a grid of {n} points")));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let (chol_cov, jitter) = cholesky_jittered(&cov, DEFAULT_JITTER)?;
        let chol_prec = precision_factor(&cov, jitter)?;
        Ok(Self { grid, mean, cov, chol_cov, chol_prec, jitter })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn to_record(&self) -> PosteriorRecord {
        let n = self.grid.len();
        let mut cov = Vec::with_capacity(n * n);
        for r in 0..n {
            cov.extend(self.cov.row(r).iter());
        }
        PosteriorRecord { grid: self.grid.clone(), mean: self.mean.iter().cloned().collect(), cov }
    }

    pub fn from_record(rec: &PosteriorRecord) -> Result<Self, GpError> {
        let n = rec.grid.len();
        if rec.cov.len() != n * n {
            return Err(GpError::Series(format!("covariance has {} entries, expected {}", rec.cov.len(), n * n)));
        }
        Self::from_moments(
            rec.grid.clone(),
            DVector::from_column_slice(&rec.mean),
            DMatrix::from_row_slice(n, n, &rec.cov),
        )
    }
}

/// Lower-triangular `M` with `M Mᵀ = (cov + jitter·1)⁻¹`.
///
/// Factoring the index-reversed matrix `R cov R = L̃ L̃ᵀ` gives
/// `cov⁻¹ = (R L̃⁻ᵀ R)(R L̃⁻ᵀ R)ᵀ`, and `R L̃⁻ᵀ R` is lower triangular. This
/// avoids factoring the explicitly inverted (and badly conditioned) matrix.
fn precision_factor(cov: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>, GpError> {
    let n = cov.nrows();
    let rev = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    let mut flipped = rev(cov);
    for i in 0..n {
        flipped[(i, i)] += jitter;
    }
    let lt = match cholesky(&flipped) {
        Ok(l) => l,
        // Reversed pivoting can lose the last digits the forward order kept.
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            cholesky(&(flipped + DMatrix::identity(n, n) * DEFAULT_JITTER))?
        }
        Err(e) => return Err(e.into()),
    };
    let inv_t = lower_triangular_inverse(&lt)?.transpose();
    Ok(rev(&inv_t))
}

/// Exact posterior on `grid` given the observations in `data`.
pub fn gp_posterior(
    spec: &KernelSpec,
    data: &IrregularSeries,
    noise: f64,
    grid: &[f64],
) -> Result<GpPosterior, GpError> {
    data.validate()?;
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(GpError::Kernel(format!("noise variance must be non-negative, got {noise}")));
    }
    let k_grid = kernel_matrix(spec, grid, grid)?;
    if data.is_empty() {
        return GpPosterior::from_moments(grid.to_vec(), DVector::zeros(grid.len()), k_grid);
    }
    let mut a = kernel_matrix(spec, &data.locations, &data.locations)?;
    for i in 0..a.nrows() {
        a[(i, i)] += noise;
    }
    let la = cholesky(&a).map_err(GpError::Singular)?;
    let k_og = kernel_matrix(spec, &data.locations, grid)?;
    let v = la.solve_lower_triangular(&k_og).ok_or(GpError::Singular(LinalgError::Singular))?;
    let y = DVector::from_column_slice(&data.values);
    let w = la.solve_lower_triangular(&y).ok_or(GpError::Singular(LinalgError::Singular))?;
    let mean = v.transpose() * w;
    let cov = k_grid - v.transpose() * &v;
    GpPosterior::from_moments(grid.to_vec(), mean, cov)
}

/// `log N(y | 0, K + σ_n² 1)`.
pub fn log_marginal_likelihood(spec: &KernelSpec, data: &IrregularSeries, noise: f64) -> Result<f64, GpError> {
    data.validate()?;
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut a = kernel_matrix(spec, &data.locations, &data.locations)?;
    for i in 0..n {
        a[(i, i)] += noise;
    }
    let la = cholesky(&a).map_err(GpError::Singular)?;
    let y = DVector::from_column_slice(&data.values);
    let w = la.solve_lower_triangular(&y).ok_or(GpError::Singular(LinalgError::Singular))?;
    let log_det_half: f64 = la.diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * w.norm_squared() - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Mean log marginal likelihood over a set of series.
pub fn mean_log_marginal_likelihood(
    spec: &KernelSpec,
    data: &[IrregularSeries],
    noise: f64,
) -> Result<f64, GpError> {
    if data.is_empty() {
        return Err(GpError::Series("no series to fit".into()));
    }
    let mut total = 0.0;
    for s in data {
        total += log_marginal_likelihood(spec, s, noise)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub epochs: usize,
    pub step: f64,
    pub batch_size: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { epochs: 20, step: 0.1, batch_size: 50, fd_step: 1e-5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub spec: KernelSpec,
    /// Full-data objective before training and after every epoch.
    pub history: Vec<f64>,
}

/// Maximize the mean log marginal likelihood over `(ln ℓ, ln v)` with Adam.
///
/// Gradients are central differences on the log-parameters; each epoch
/// visits shuffled minibatches. The returned spec is the best full-data
/// iterate seen, so the objective never ends below its starting value.
pub fn fit_gp(
    data: &[IrregularSeries],
    init: &KernelSpec,
    noise: f64,
    opts: &FitOptions,
) -> Result<FitOutcome, GpError> {
    init.validate()?;
    let objective = |spec: &KernelSpec, batch: &[IrregularSeries]| mean_log_marginal_likelihood(spec, batch, noise);
    let start = objective(init, data)?;
    let mut history = vec![start];
    let (mut best, mut best_val) = (*init, start);
    let mut p = init.log_params();
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let (mut m1, mut m2) = ([0.0; 2], [0.0; 2]);
    let mut t = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng::seeded(opts.seed);
    let bs = opts.batch_size.max(1);

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            let batch: Vec<IrregularSeries> = chunk.iter().map(|&i| data[i].clone()).collect();
            let mut grad = [0.0; 2];
            for d in 0..2 {
                let mut hi = p;
                hi[d] += opts.fd_step;
                let mut lo = p;
                lo[d] -= opts.fd_step;
                let fh = objective(&init.with_log_params(hi), &batch);
                let fl = objective(&init.with_log_params(lo), &batch);
                match (fh, fl) {
                    (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => {
                        grad[d] = (a - b) / (2.0 * opts.fd_step)
                    }
                    _ => return Err(GpError::Divergence { last: best }),
                }
            }
            t += 1;
            for d in 0..2 {
                m1[d] = b1 * m1[d] + (1.0 - b1) * grad[d];
                m2[d] = b2 * m2[d] + (1.0 - b2) * grad[d] * grad[d];
                let mh = m1[d] / (1.0 - b1.powi(t));
                let vh = m2[d] / (1.0 - b2.powi(t));
                p[d] += opts.step * mh / (vh.sqrt() + eps);
            }
        }
        let spec = init.with_log_params(p);
        let val = match objective(&spec, data) {
            Ok(v) if v.is_finite() && spec.validate().is_ok() => v,
            _ => return Err(GpError::Divergence { last: best }),
        };
        history.push(val);
        if val > best_val {
            best = spec;
            best_val = val;
        }
    }
    Ok(FitOutcome { spec: best, history })
}

/// Prepare `|μ', k'⟩` from the vacuum: apply `S = L ⊕ L⁻ᵀ`, then displace
/// by `(μ', 0)`. The result has `C¹¹ = k'`, `C²² = k'⁻¹` and no cross terms.
pub fn embed_posterior_state(post: &GpPosterior) -> Result<GaussianState, GpError> {
    let n = post.len();
    let dim = PhaseDim::new(n)?;
    let l = &post.chol_cov;
    let l_inv_t = lower_triangular_inverse(l)?.transpose();
    let s = direct_sum(l, &l_inv_t);
    let mut xi = DVector::zeros(2 * n);
    xi.rows_mut(0, n).copy_from(&post.mean);
    Ok(GaussianState::vacuum(dim).apply_symplectic(&s)?.displace(&xi)?)
}
