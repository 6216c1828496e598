//! Position-only reference network: samples from `GP(μ', k')` pushed
//! through `φ ↦ softplus(exp(a) φ + b)` layers, one sample at a time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::layers::{pooling_matrix, softplus};
use super::model::{LayerParams, Logits, Model};
use super::sampling::{build_sampling_distribution, standard_normals};
use super::{ModelKind, NetConfig, NetError};
use crate::gp::GpPosterior;
use crate::rng;
use crate::symplectic::{matrix_exp, BlockGenerator};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalLayer {
    /// Log-weight; the layer multiplies by `exp(a)`.
    pub a: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalNet {
    pub channels: usize,
    pub grid: usize,
    pub classes: usize,
    pub beta: f64,
    pub pooling: bool,
    pub layers: Vec<ClassicalLayer>,
}

impl ClassicalNet {
    pub fn modes(&self) -> usize {
        self.channels * self.grid
    }

    /// Random log-weights `U(±scale)` and biases `U(±bias_scale)`.
    pub fn random(
        channels: usize,
        grid: usize,
        classes: usize,
        n_layers: usize,
        beta: f64,
        pooling: bool,
        scale: f64,
        seed: u64,
    ) -> Self {
        let m = channels * grid;
        let mut rng = rng::seeded(seed);
        let layers = (0..n_layers)
            .map(|_| ClassicalLayer {
                a: DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale)),
                bias: DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5)),
            })
            .collect();
        Self { channels, grid, classes, beta, pooling, layers }
    }

    fn readout_index(&self, class: usize) -> usize {
        (class % self.channels) * self.grid + class / self.channels
    }

    /// The `spnn` with block-diagonal layers `exp(a) ⊕ exp(-aᵀ)` and
    /// position-only biases.
    pub fn to_spnn(&self, n_samples: usize) -> Result<Model, NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Config("an spnn needs at least one layer".into()));
        }
        let m = self.modes();
        let config = NetConfig {
            layers: self.layers.len(),
            channels: self.channels,
            grid_size: self.grid,
            classes: self.classes,
            beta: self.beta,
            n_samples,
            model_kind: ModelKind::Spnn,
            equivariant: false,
            pooling: self.pooling,
        };
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut bias = DVector::zeros(2 * m);
                bias.rows_mut(0, m).copy_from(&l.bias);
                Ok(LayerParams::Symplectic {
                    gen: BlockGenerator::new(l.a.clone(), DMatrix::zeros(m, m), DMatrix::zeros(m, m))?,
                    bias,
                })
            })
            .collect::<Result<_, NetError>>()?;
        let model = Model { config, layers };
        model.validate()?;
        Ok(model)
    }
}

/// Monte-Carlo logits of the classical network.
///
/// Noise is drawn exactly as for the phase-space networks (one `2M` normal
/// vector per sample) and only its position part is used, so equal seeds
/// give paired estimates.
pub fn pncnn_forward(net: &ClassicalNet, post: &GpPosterior, n_samples: usize, seed: u64) -> Result<Logits, NetError> {
    if post.len() != net.grid {
        return Err(NetError::Dimension(format!("posterior has {} points, network expects {}", post.len(), net.grid)));
    }
    if n_samples == 0 {
        return Err(NetError::Config("n_samples must be positive".into()));
    }
    let m = net.modes();
    let dist = build_sampling_distribution(post, net.channels)?;
    let eps = standard_normals(n_samples, 2 * m, seed);
    let weights: Vec<DMatrix<f64>> = net.layers.iter().map(|l| matrix_exp(&l.a)).collect::<Result<_, _>>()?;
    let pool = net.pooling.then(|| {
        let p = pooling_matrix(net.grid);
        let mut full = DMatrix::zeros(m, m);
        for c in 0..net.channels {
            full.view_mut((c * net.grid, c * net.grid), (net.grid, net.grid)).copy_from(&p);
        }
        full
    });
    let readout: Vec<usize> = (0..net.classes).map(|c| net.readout_index(c)).collect();
    let mut sums = vec![0.0; net.classes];
    let mut sq = vec![0.0; net.classes];
    let g = net.grid;
    for s in 0..n_samples {
        let e = eps.row(s);
        let mut phi = DVector::from_fn(m, |i, _| e[i]);
        let head = &dist.chol_phi * e.columns(0, g).transpose() + dist.mean.rows(0, g);
        phi.rows_mut(0, g).copy_from(&head);
        for (l, (layer, w)) in net.layers.iter().zip(&weights).enumerate() {
            if l + 1 == net.layers.len() {
                if let Some(p) = &pool {
                    phi = p * phi;
                }
            }
            phi = w * phi + &layer.bias;
            if l + 1 < net.layers.len() {
                phi.apply(|v| *v = softplus(*v, net.beta));
            }
        }
        if net.layers.is_empty() {
            if let Some(p) = &pool {
                phi = p * phi;
            }
        }
        for (c, &idx) in readout.iter().enumerate() {
            sums[c] += phi[idx];
            sq[c] += phi[idx] * phi[idx];
        }
    }
    let n = n_samples as f64;
    let values: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let std_err = values
        .iter()
        .zip(&sq)
        .map(|(mean, s2)| {
            let var = if n_samples > 1 { (s2 - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
            (var / n).sqrt()
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("classical logits".into()));
    }
    Ok(Logits { values, std_err })
}
