//! Pure Gaussian states on phase space.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::symplectic::{
    cholesky, cholesky_jittered, hermitian_min_eigenvalue, is_symplectic, max_abs,
    uncertainty_matrix, LinalgError, PhaseDim, DEFAULT_JITTER,
};

/// Tolerances used when validating states and transformations.
pub mod tol {
    pub const SYMMETRY: f64 = 1e-10;
    pub const UNCERTAINTY: f64 = 1e-8;
    pub const DETERMINANT: f64 = 1e-8;
    /// Relative to `max(1, ‖S‖∞²)`, since `S J Sᵀ` rounds at that scale.
    pub const SYMPLECTIC: f64 = 1e-8;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("transformation is not symplectic (residual {0:e})")]
    NotSymplectic(f64),
    #[error("invalid measurement record: {0}")]
    Record(String),
    #[error("conditioning failed: observed block is singular ({0})")]
    Conditioning(LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Position measurements `y_i` of `φ_{x_i}` with additive noise `σ_n²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub site_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub noise_variance: f64,
}

impl MeasurementRecord {
    pub fn new(site_indices: Vec<usize>, values: Vec<f64>, noise_variance: f64) -> Self {
        Self { site_indices, values, noise_variance }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), 0.0)
    }

    pub fn validate(&self, modes: usize) -> Result<(), StateError> {
        if self.site_indices.len() != self.values.len() {
            return Err(StateError::Record(format!(
                "{} sites but {} values",
                self.site_indices.len(),
                self.values.len()
            )));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(StateError::Record(format!(
                "noise variance must be finite and non-negative, got {}",
                self.noise_variance
            )));
        }
        let mut seen = vec![false; modes];
        for &i in &self.site_indices {
            if i >= modes {
                return Err(StateError::Record(format!("site {i} out of range for {modes} modes")));
            }
            if seen[i] {
                return Err(StateError::Record(format!("site {i} observed twice")));
            }
            seen[i] = true;
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(StateError::Record("non-finite observation".into()));
        }
        Ok(())
    }
}

/// Result of checking every state invariant at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateReport {
    pub asymmetry: f64,
    pub positive_definite: bool,
    pub min_uncertainty_eig: f64,
    pub det: f64,
}

impl StateReport {
    pub fn ok(&self) -> bool {
        self.asymmetry <= tol::SYMMETRY
            && self.positive_definite
            && self.min_uncertainty_eig >= -tol::UNCERTAINTY
            && self.det >= 1.0 - tol::DETERMINANT
    }
}

/// JSON shape `{modes, mean: [..], cov: [row-major ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub modes: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GaussianState {
    /// Build a state from raw parts. Checks shapes, finiteness and symmetry;
    /// the physical constraints are left to [`GaussianState::report`].
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, StateError> {
        let dim = PhaseDim::from_phase_len(mean.len())?;
        let n = dim.phase_len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(StateError::Length { expected: n * n, got: cov.len() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite.into());
        }
        let scale = max_abs(&cov).max(1.0);
        let asym = max_abs(&(&cov - cov.transpose()));
        if asym > tol::SYMMETRY * scale {
            return Err(LinalgError::NotSymmetric(asym).into());
        }
        Ok(Self { mean, cov })
    }

    pub fn vacuum(dim: PhaseDim) -> Self {
        let n = dim.phase_len();
        Self { mean: DVector::zeros(n), cov: DMatrix::identity(n, n) }
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn dim(&self) -> PhaseDim {
        PhaseDim::from_phase_len(self.mean.len()).expect("validated on construction")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn displace(&self, xi: &DVector<f64>) -> Result<Self, StateError> {
        if xi.len() != self.mean.len() {
            return Err(StateError::Length { expected: self.mean.len(), got: xi.len() });
        }
        Ok(Self { mean: &self.mean + xi, cov: self.cov.clone() })
    }

    /// `(m, C) ↦ (S m, S C Sᵀ)`.
    pub fn apply_symplectic(&self, s: &DMatrix<f64>) -> Result<Self, StateError> {
        let n = self.mean.len();
        if s.nrows() != n || s.ncols() != n {
            return Err(StateError::Length { expected: n * n, got: s.len() });
        }
        let chk = is_symplectic(s, f64::INFINITY)?;
        let scale = max_abs(s).max(1.0).powi(2);
        if chk.residual > tol::SYMPLECTIC * scale {
            return Err(StateError::NotSymplectic(chk.residual));
        }
        let cov = s * &self.cov * s.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean: s * &self.mean, cov })
    }

    /// Smallest eigenvalue of `C + iJ` and whether it clears `-tol`.
    pub fn check_uncertainty(&self, tol: f64) -> Result<(bool, f64), StateError> {
        let h = uncertainty_matrix(&self.cov)?;
        let min = hermitian_min_eigenvalue(&h)?;
        Ok((min >= -tol, min))
    }

    /// `det C`, via Cholesky when possible.
    pub fn det(&self) -> f64 {
        match cholesky(&self.cov) {
            Ok(l) => l.diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>().exp(),
            Err(_) => self.cov.clone().lu().determinant(),
        }
    }

    pub fn report(&self) -> Result<StateReport, StateError> {
        let (_, min_eig) = self.check_uncertainty(f64::INFINITY)?;
        Ok(StateReport {
            asymmetry: max_abs(&(&self.cov - self.cov.transpose())),
            positive_definite: cholesky_jittered(&self.cov, DEFAULT_JITTER).is_ok(),
            min_uncertainty_eig: min_eig,
            det: self.det(),
        })
    }

    /// Condition on noisy position measurements.
    ///
    /// The full `2M` Gaussian is conditioned on `φ_O + noise = y`, with `σ_n²`
    /// added only to the observed block. For `σ_n² > 0` the measurement also
    /// kicks the conjugate momenta: the π-variance at each observed site
    /// grows by `1/σ_n²`. That back-action is what a physical position
    /// measurement of resolution `σ_n` does; it keeps pure states pure and
    /// `C + iJ ⪰ 0` intact, and never touches the φ-sector, which is the
    /// usual GP posterior. With `σ_n² = 0` the measurement is projective and
    /// no back-action is added; measured modes then carry zero φ-variance.
    pub fn condition(&self, rec: &MeasurementRecord) -> Result<Self, StateError> {
        let m = self.modes();
        rec.validate(m)?;
        let k = rec.site_indices.len();
        if k == 0 {
            return Ok(self.clone());
        }
        let n = 2 * m;
        let obs = &rec.site_indices;

        // A = C_OO + σ² 1, cross = C[:, O].
        let mut a = DMatrix::zeros(k, k);
        for (p, &i) in obs.iter().enumerate() {
            for (q, &j) in obs.iter().enumerate() {
                a[(p, q)] = self.cov[(i, j)];
            }
            a[(p, p)] += rec.noise_variance;
        }
        let cross = DMatrix::from_fn(n, k, |r, q| self.cov[(r, obs[q])]);
        let la = cholesky(&a).map_err(StateError::Conditioning)?;

        let resid = DVector::from_fn(k, |p, _| rec.values[p] - self.mean[obs[p]]);
        // V = L_A⁻¹ crossᵀ so that cross A⁻¹ crossᵀ = Vᵀ V.
        let v = la
            .solve_lower_triangular(&cross.transpose())
            .ok_or(StateError::Conditioning(LinalgError::Singular))?;
        let w = la
            .solve_lower_triangular(&resid)
            .ok_or(StateError::Conditioning(LinalgError::Singular))?;
        let mean = &self.mean + v.transpose() * w;
        let mut cov = &self.cov - v.transpose() * &v;
        cov = (&cov + cov.transpose()) * 0.5;
        if rec.noise_variance > 0.0 {
            for &i in obs {
                cov[(m + i, m + i)] += 1.0 / rec.noise_variance;
            }
        }
        Ok(Self { mean, cov })
    }

    /// Distribution of position measurements, `N(m¹, C¹¹)`.
    pub fn born_marginal(&self) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.modes();
        (self.mean.rows(0, m).into_owned(), self.cov.view((0, 0), (m, m)).into_owned())
    }

    /// `n` draws from the Born marginal as rows of an `n x M` matrix.
    pub fn sample_born(&self, n: usize, seed: u64) -> Result<DMatrix<f64>, StateError> {
        let (mu, c11) = self.born_marginal();
        let m = mu.len();
        if n == 0 {
            return Ok(DMatrix::zeros(0, m));
        }
        let (l, _) = cholesky_jittered(&c11, DEFAULT_JITTER)?;
        let mut rng = rng::seeded(seed);
        let eps = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let mut out = (l * eps).transpose();
        for mut row in out.row_iter_mut() {
            row += mu.transpose();
        }
        Ok(out)
    }

    pub fn to_record(&self) -> StateRecord {
        let n = self.mean.len();
        let mut cov = Vec::with_capacity(n * n);
        for r in 0..n {
            cov.extend(self.cov.row(r).iter());
        }
        StateRecord { modes: self.modes(), mean: self.mean.iter().cloned().collect(), cov }
    }

    pub fn from_record(rec: &StateRecord) -> Result<Self, StateError> {
        let n = 2 * rec.modes;
        if rec.mean.len() != n {
            return Err(StateError::Length { expected: n, got: rec.mean.len() });
        }
        if rec.cov.len() != n * n {
            return Err(StateError::Length { expected: n * n, got: rec.cov.len() });
        }
        Self::new(DVector::from_column_slice(&rec.mean), DMatrix::from_row_slice(n, n, &rec.cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{direct_sum, symplectic_from_generator, BlockGenerator};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dim(m: usize) -> PhaseDim {
        PhaseDim::new(m).unwrap()
    }

    fn random_layer(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
        let mut blk = || DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale));
        let g = BlockGenerator::new(blk(), blk(), blk()).unwrap();
        symplectic_from_generator(&g).unwrap()
    }

    #[test]
    fn vacuum_is_minimal() {
        let v = GaussianState::vacuum(dim(1));
        assert_eq!(v.mean().as_slice(), &[0.0, 0.0]);
        assert_eq!(v.cov(), &DMatrix::identity(2, 2));
        let (ok, min) = v.check_uncertainty(1e-12).unwrap();
        assert!(ok);
        assert!(min.abs() < 1e-14);
        assert_relative_eq!(v.det(), 1.0);
        assert!(v.report().unwrap().ok());
    }

    #[test]
    fn displacement_examples() {
        let v = GaussianState::vacuum(dim(1));
        let d = v.displace(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(d.mean().as_slice(), &[1.0, 0.0]);
        assert_eq!(d.cov(), v.cov());
        assert_eq!(v.displace(&DVector::zeros(2)).unwrap(), v);
        assert!(v.displace(&DVector::zeros(3)).is_err());

        let x1 = DVector::from_vec(vec![0.3, -1.0]);
        let x2 = DVector::from_vec(vec![2.0, 0.5]);
        let a = v.displace(&x1).unwrap().displace(&x2).unwrap();
        let b = v.displace(&(&x1 + &x2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn squeezed_vacuum() {
        let r = 2f64.ln();
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![r.exp(), (-r).exp()]));
        let out = GaussianState::vacuum(dim(1)).apply_symplectic(&s).unwrap();
        assert_relative_eq!(out.cov()[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(out.cov()[(1, 1)], 0.25, epsilon = 1e-14);
        assert_relative_eq!(out.det(), 1.0, epsilon = 1e-12);

        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        assert!(matches!(
            GaussianState::vacuum(dim(1)).apply_symplectic(&bad),
            Err(StateError::NotSymplectic(_))
        ));
    }

    #[test]
    fn uncertainty_examples() {
        let half = GaussianState::new(DVector::zeros(2), DMatrix::identity(2, 2) * 0.5).unwrap();
        let (ok, min) = half.check_uncertainty(1e-8).unwrap();
        assert!(!ok);
        assert_relative_eq!(min, -0.5, epsilon = 1e-12);

        let two = GaussianState::new(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
        let (ok, min) = two.check_uncertainty(1e-8).unwrap();
        assert!(ok);
        assert_relative_eq!(min, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_site_conditioning() {
        let v = GaussianState::vacuum(dim(1));
        let rec = MeasurementRecord::new(vec![0], vec![2.0], 1.0);
        let post = v.condition(&rec).unwrap();
        assert_relative_eq!(post.mean()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(post.cov()[(0, 0)], 0.5, epsilon = 1e-14);
        // Momentum picks up the back-action and the state stays pure.
        assert_relative_eq!(post.cov()[(1, 1)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(post.det(), 1.0, epsilon = 1e-12);
        assert_eq!(v.condition(&MeasurementRecord::empty()).unwrap(), v);
    }

    #[test]
    fn record_validation() {
        let v = GaussianState::vacuum(dim(2));
        for rec in [
            MeasurementRecord::new(vec![2], vec![0.0], 0.1),
            MeasurementRecord::new(vec![0, 0], vec![0.0, 1.0], 0.1),
            MeasurementRecord::new(vec![0], vec![], 0.1),
            MeasurementRecord::new(vec![0], vec![1.0], -1.0),
        ] {
            assert!(matches!(v.condition(&rec), Err(StateError::Record(_))), "{rec:?}");
        }
    }

    #[test]
    fn projective_measurement_of_point_state_is_singular() {
        let c = direct_sum(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1));
        let s = GaussianState::new(DVector::zeros(2), c).unwrap();
        let rec = MeasurementRecord::new(vec![0], vec![1.0], 0.0);
        assert!(matches!(s.condition(&rec), Err(StateError::Conditioning(_))));
    }

    #[test]
    fn born_marginal_examples() {
        let v = GaussianState::vacuum(dim(3));
        let (mu, c) = v.born_marginal();
        assert_eq!(mu, DVector::zeros(3));
        assert_eq!(c, DMatrix::identity(3, 3));

        let xi = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (mu, _) = v.displace(&xi).unwrap().born_marginal();
        assert_eq!(mu.as_slice(), &[1.0, 2.0, 3.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.5 } else { rng.random_range(-0.3..0.3) });
        let a_inv_t = a.clone().try_inverse().unwrap().transpose();
        let s = direct_sum(&a, &a_inv_t);
        let start = GaussianState::new(DVector::zeros(6), DMatrix::identity(6, 6) * 1.3).unwrap();
        let (_, c) = start.apply_symplectic(&s).unwrap().born_marginal();
        let expected = &a * DMatrix::<f64>::identity(3, 3) * 1.3 * a.transpose();
        assert!(max_abs(&(c - expected)) < 1e-12);
    }

    #[test]
    fn born_sampling_statistics() {
        let n = 100_000;
        let v = GaussianState::vacuum(dim(2));
        let draws = v.sample_born(n, 17).unwrap();
        assert_eq!(draws.shape(), (n, 2));
        let mean = draws.row_mean();
        assert!(mean.iter().all(|m| m.abs() < 0.02), "{mean}");

        let c = direct_sum(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])), &DMatrix::identity(2, 2));
        let s = GaussianState::new(DVector::zeros(4), c).unwrap();
        let draws = s.sample_born(n, 3).unwrap();
        let centered = &draws - DMatrix::from_fn(n, 2, |_, j| draws.column(j).mean());
        let emp = centered.transpose() * &centered / (n as f64 - 1.0);
        assert!((emp[(0, 0)] - 1.0).abs() < 0.1);
        assert!((emp[(1, 1)] - 4.0).abs() < 0.1);
        assert!(emp[(0, 1)].abs() < 0.1);

        assert_eq!(s.sample_born(0, 3).unwrap().shape(), (0, 2));
        assert_eq!(s.sample_born(10, 9).unwrap(), s.sample_born(10, 9).unwrap());
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = GaussianState::vacuum(dim(2)).apply_symplectic(&random_layer(&mut rng, 2, 0.5)).unwrap();
        let json = serde_json::to_string(&s.to_record()).unwrap();
        let rec: StateRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(GaussianState::from_record(&rec).unwrap(), s);
    }

    fn random_prior(rng: &mut ChaCha8Rng, m: usize) -> GaussianState {
        let s = random_layer(rng, m, 0.4);
        let xi = DVector::from_fn(2 * m, |_, _| rng.random_range(-1.0..1.0));
        GaussianState::vacuum(dim(m)).apply_symplectic(&s).unwrap().displace(&xi).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn symplectic_chain_preserves_uncertainty(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 6;
            let mut st = GaussianState::vacuum(dim(m));
            let mut last = st.check_uncertainty(1e-8).unwrap().1;
            for _ in 0..5 {
                st = st.apply_symplectic(&random_layer(&mut rng, m, 0.3)).unwrap();
                let (ok, min) = st.check_uncertainty(1e-8).unwrap();
                prop_assert!(ok);
                prop_assert!(min >= last - 1e-8);
                last = min;
            }
            prop_assert!(st.report().unwrap().ok());
        }

        #[test]
        fn conditioning_composes(seed in any::<u64>(), noise in prop::sample::select(vec![1e-2, 0.5, 1.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 5;
            let prior = random_prior(&mut rng, m);
            let ys: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d1 = MeasurementRecord::new(vec![0, 3], ys[..2].to_vec(), noise);
            let d2 = MeasurementRecord::new(vec![1, 4], ys[2..].to_vec(), noise);
            let both = MeasurementRecord::new(vec![0, 3, 1, 4], ys.clone(), noise);
            let seq = prior.condition(&d1).unwrap().condition(&d2).unwrap();
            let once = prior.condition(&both).unwrap();
            let scale = max_abs(once.cov()).max(1.0);
            prop_assert!(max_abs(&(seq.cov() - once.cov())) < 1e-9 * scale);
            prop_assert!((seq.mean() - once.mean()).amax() < 1e-9 * scale);
        }

        #[test]
        fn conditioning_keeps_valid_states_valid(seed in any::<u64>(), noise in prop::sample::select(vec![1e-2, 1.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prior = random_prior(&mut rng, 4);
            let rec = MeasurementRecord::new(vec![2, 0], vec![0.7, -0.1], noise);
            let post = prior.condition(&rec).unwrap();
            let rep = post.report().unwrap();
            prop_assert!(rep.min_uncertainty_eig >= -1e-8, "{rep:?}");
            prop_assert!((rep.det - 1.0).abs() < 1e-6, "{rep:?}");
        }
    }
}
