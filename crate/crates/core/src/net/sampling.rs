//! Input distribution of the networks and its reparametrized sampler.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::NetError;
use crate::gp::GpPosterior;
use crate::rng;

/// Monte-Carlo samples as rows of an `n x 2M` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    channels: usize,
    grid: usize,
    data: DMatrix<f64>,
}

impl SampleBatch {
    pub fn new(channels: usize, grid: usize, data: DMatrix<f64>) -> Result<Self, NetError> {
        if data.ncols() != 2 * channels * grid {
            return Err(NetError::Dimension(format!(
                "expected {} columns for {channels} channels on {grid} sites, got {}",
                2 * channels * grid,
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("sample batch".into()));
        }
        Ok(Self { channels, grid, data })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn modes(&self) -> usize {
        self.channels * self.grid
    }

    /// Entry `(sample, channel, site, j)` with `j = 0` for φ and `1` for π.
    pub fn get(&self, sample: usize, channel: usize, site: usize, j: usize) -> f64 {
        self.data[(sample, j * self.modes() + channel * self.grid + site)]
    }

    /// Flattened `(n, N_C, |X|, 2)` tensor in row-major order.
    pub fn to_tensor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for s in 0..self.n_samples() {
            for c in 0..self.channels {
                for x in 0..self.grid {
                    for j in 0..2 {
                        out.push(self.get(s, c, x, j));
                    }
                }
            }
        }
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// `N(m, F Fᵀ)` over phase space, with the factor `F` stored blockwise:
/// the channel-0 position and momentum blocks carry `L` and `M`, every
/// other coordinate is an independent unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    pub channels: usize,
    pub grid: usize,
    pub mean: DVector<f64>,
    pub chol_phi: DMatrix<f64>,
    pub chol_pi: DMatrix<f64>,
}

impl SamplingDistribution {
    pub fn modes(&self) -> usize {
        self.channels * self.grid
    }

    pub fn factor(&self) -> DMatrix<f64> {
        let m = self.modes();
        let g = self.grid;
        let mut f = DMatrix::identity(2 * m, 2 * m);
        f.view_mut((0, 0), (g, g)).copy_from(&self.chol_phi);
        f.view_mut((m, m), (g, g)).copy_from(&self.chol_pi);
        f
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let f = self.factor();
        &f * f.transpose()
    }

    /// `z = m + F ε` for every row `ε` of `eps` (`n x 2M`).
    pub fn transform(&self, eps: &DMatrix<f64>) -> Result<SampleBatch, NetError> {
        let m = self.modes();
        let g = self.grid;
        if eps.ncols() != 2 * m {
            return Err(NetError::Dimension(format!("noise has {} columns, expected {}", eps.ncols(), 2 * m)));
        }
        let mut z = eps.clone();
        let phi0 = eps.columns(0, g) * self.chol_phi.transpose();
        z.columns_mut(0, g).copy_from(&phi0);
        let pi0 = eps.columns(m, g) * self.chol_pi.transpose();
        z.columns_mut(m, g).copy_from(&pi0);
        for mut row in z.row_iter_mut() {
            row += self.mean.transpose();
        }
        SampleBatch::new(self.channels, self.grid, z)
    }

    /// Positions only: `(z_φ)` for every row of `eps`, an `n x M` matrix.
    pub fn transform_positions(&self, eps: &DMatrix<f64>) -> Result<DMatrix<f64>, NetError> {
        let m = self.modes();
        let g = self.grid;
        if eps.ncols() != 2 * m {
            return Err(NetError::Dimension(format!("noise has {} columns, expected {}", eps.ncols(), 2 * m)));
        }
        let mut z = eps.columns(0, m).into_owned();
        let phi0 = eps.columns(0, g) * self.chol_phi.transpose();
        z.columns_mut(0, g).copy_from(&phi0);
        for mut row in z.row_iter_mut() {
            row += self.mean.rows(0, m).transpose();
        }
        Ok(z)
    }
}

pub fn build_sampling_distribution(post: &GpPosterior, n_channels: usize) -> Result<SamplingDistribution, NetError> {
    if n_channels == 0 {
        return Err(NetError::Config("at least one channel is required".into()));
    }
    let g = post.len();
    if post.chol_cov.shape() != (g, g) || post.chol_prec.shape() != (g, g) {
        return Err(NetError::Dimension("posterior factors do not match its grid".into()));
    }
    if post.chol_cov.iter().chain(post.chol_prec.iter()).any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("posterior factors".into()));
    }
    let m = n_channels * g;
    let mut mean = DVector::zeros(2 * m);
    mean.rows_mut(0, g).copy_from(&post.mean);
    Ok(SamplingDistribution {
        channels: n_channels,
        grid: g,
        mean,
        chol_phi: post.chol_cov.clone(),
        chol_pi: post.chol_prec.clone(),
    })
}

/// `n x dim` standard normals, drawn row by row.
pub fn standard_normals(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::seeded(seed);
    let mut out = DMatrix::zeros(n, dim);
    for r in 0..n {
        for c in 0..dim {
            out[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    out
}

pub fn draw_samples(dist: &SamplingDistribution, n_samples: usize, seed: u64) -> Result<SampleBatch, NetError> {
    dist.transform(&standard_normals(n_samples, 2 * dist.modes(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::max_abs;
    use approx::assert_relative_eq;

    fn scalar_post(k: f64, mu: f64) -> GpPosterior {
        GpPosterior::from_moments(vec![0.0], DVector::from_element(1, mu), DMatrix::from_element(1, 1, k)).unwrap()
    }

    #[test]
    fn single_site_distribution() {
        let d = build_sampling_distribution(&scalar_post(2.0, 0.3), 1).unwrap();
        let c = d.covariance();
        assert_relative_eq!(c[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(c[(1, 1)], 0.5, epsilon = 1e-12);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(d.mean.as_slice(), &[0.3, 0.0]);
    }

    #[test]
    fn other_channels_are_unit() {
        let post = GpPosterior::from_moments(
            vec![0.0, 1.0],
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]),
        )
        .unwrap();
        let d = build_sampling_distribution(&post, 2).unwrap();
        let c = d.covariance();
        // Channel 1 occupies positions 2..4 and momenta 6..8.
        for i in [2, 3, 6, 7] {
            for j in 0..8 {
                assert_eq!(c[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(max_abs(&(&c - c.transpose())) == 0.0);
        let k_inv = post.cov.clone().try_inverse().unwrap();
        assert!(max_abs(&(c.view((4, 4), (2, 2)).into_owned() - k_inv)) < 1e-9);
    }

    #[test]
    fn degenerate_posterior_collapses_positions() {
        let d = build_sampling_distribution(&scalar_post(0.0, 1.5), 1).unwrap();
        let batch = draw_samples(&d, 1000, 4).unwrap();
        for s in 0..batch.n_samples() {
            assert!((batch.get(s, 0, 0, 0) - 1.5).abs() < 1e-3);
        }
    }

    #[test]
    fn empirical_covariance_matches() {
        let post = GpPosterior::from_moments(
            vec![0.0, 1.0],
            DVector::from_vec(vec![0.5, -0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.5]),
        )
        .unwrap();
        let d = build_sampling_distribution(&post, 1).unwrap();
        let n = 100_000;
        let z = draw_samples(&d, n, 99).unwrap().into_matrix();
        let mean = z.row_mean();
        let centered = DMatrix::from_fn(n, 4, |r, c| z[(r, c)] - mean[c]);
        let emp = centered.transpose() * &centered / (n as f64 - 1.0);
        assert!(max_abs(&(emp - d.covariance())) < 0.05);
    }

    #[test]
    fn seeds_are_reproducible() {
        let d = build_sampling_distribution(&scalar_post(1.0, 0.0), 3).unwrap();
        assert_eq!(draw_samples(&d, 7, 1).unwrap(), draw_samples(&d, 7, 1).unwrap());
        assert_ne!(draw_samples(&d, 7, 1).unwrap(), draw_samples(&d, 7, 2).unwrap());
    }

    #[test]
    fn positions_match_full_transform() {
        let d = build_sampling_distribution(&scalar_post(0.7, 0.2), 2).unwrap();
        let eps = standard_normals(5, 4, 8);
        let full = d.transform(&eps).unwrap();
        let pos = d.transform_positions(&eps).unwrap();
        assert_eq!(full.matrix().columns(0, 2).into_owned(), pos);
        assert_eq!(full.to_tensor().len(), 5 * 2 * 1 * 2);
    }
}
