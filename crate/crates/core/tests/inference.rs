//! GP regression and quantum conditioning agree, including the momentum block.

use nalgebra::{DMatrix, DVector};
use phasenet_core::gp::{embed_posterior_state, gp_posterior, kernel_matrix, uniform_grid};
use phasenet_core::{GpPosterior, IrregularSeries, KernelSpec, MeasurementRecord};

#[test]
fn conditioning_the_prior_state_is_gp_regression() {
    let n = 9;
    let grid = uniform_grid(n);
    let spec = KernelSpec::matern_half(0.3, 1.2).unwrap();
    let noise = 0.05;
    let sites = [1, 4, 5, 8];
    let values = [0.4, -1.1, -0.7, 0.9];

    let k = kernel_matrix(&spec, &grid, &grid).unwrap();
    let prior = GpPosterior::from_moments(grid.clone(), DVector::zeros(n), k).unwrap();
    let state = embed_posterior_state(&prior)
        .unwrap()
        .condition(&MeasurementRecord::new(sites.to_vec(), values.to_vec(), noise))
        .unwrap();

    let obs = IrregularSeries::new(sites.iter().map(|&i| grid[i]).collect(), values.to_vec(), None).unwrap();
    let post = gp_posterior(&spec, &obs, noise, &grid).unwrap();

    let (mean, cov) = state.born_marginal();
    assert!((mean - &post.mean).amax() < 1e-10);
    assert!((cov - &post.cov).amax() < 1e-10);

    // The conditioned state is again the embedding of its own posterior.
    let pi: DMatrix<f64> = state.cov().view((n, n), (n, n)).into_owned();
    let prec = post.cov.clone().try_inverse().unwrap();
    assert!((&pi - &prec).amax() / prec.amax() < 1e-9);
    assert!((&prec - &post.chol_prec * post.chol_prec.transpose()).amax() / prec.amax() < 1e-9);
    let rep = state.report().unwrap();
    assert!(rep.ok(), "{rep:?}");
    assert!((rep.det - 1.0).abs() < 1e-8);
}
