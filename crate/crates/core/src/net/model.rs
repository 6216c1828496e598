//! Network parameters, the batched forward pass and reverse-mode gradients.
//!
//! All three model kinds reduce to the same stack of dense stages acting on
//! row-stacked samples, `Y = Z Wᵀ + b`, interleaved with a pointwise
//! nonlinearity. They differ in how `W` is parametrized and in what a row of
//! `Z` holds:
//!
//! | kind   | row of `Z`                 | `W`          | nonlinearity        |
//! |--------|----------------------------|--------------|---------------------|
//! | `bnn`  | posterior mean `μ'`        | free         | softplus            |
//! | `pnn`  | sampled positions (`M`)    | `exp(A)`     | softplus            |
//! | `spnn` | sampled phase space (`2M`) | `exp(X)`     | symplectic softplus |

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    position_pooling, phase_pooling, project_block_circulant, project_channel_constant, sigmoid, softplus,
    symplectic_softplus_point, symplectic_softplus_vjp,
};
use super::sampling::{build_sampling_distribution, standard_normals, SampleBatch, SamplingDistribution};
use super::{ModelKind, NetConfig, NetError};
use crate::gp::GpPosterior;
use crate::rng;
use crate::symplectic::{expm_pullback, matrix_exp, symmetrize, BlockGenerator};

/// Parameters of one linear layer.
///
/// `pnn` layers keep `B = C = 0` and a position-only bias of length `M`;
/// `spnn` layers carry all three blocks and a bias over the full phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Dense { w: DMatrix<f64>, b: DVector<f64> },
    Symplectic { gen: BlockGenerator, bias: DVector<f64> },
}

/// Monte-Carlo logits and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl Logits {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: NetConfig,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, Copy)]
enum Act {
    Softplus(f64),
    Symplectic(f64),
}

/// Everything the dense engine needs, with weights already exponentiated.
struct Plan {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    pool: Option<DMatrix<f64>>,
    act: Act,
    readout: Vec<usize>,
}

struct Tape {
    /// Input of every stage (after pooling for the last one).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation output of every stage but the last.
    pre: Vec<DMatrix<f64>>,
}

fn kaiming(rng: &mut rng::Rng, rows: usize, cols: usize, fan_in: usize, scale: f64) -> DMatrix<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-bound..bound))
}

fn uniform_vec(rng: &mut rng::Rng, n: usize, fan_in: usize, scale: f64) -> DVector<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    DVector::from_fn(n, |_, _| scale * rng.random_range(-bound..bound))
}

/// Copy the first row of every channel block along its wrapped diagonals.
fn broadcast_block_circulant(m: &DMatrix<f64>, grid: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        let (ca, i) = (r / grid, r % grid);
        let (cb, j) = (c / grid, c % grid);
        m[(ca * grid, cb * grid + (j + grid - i) % grid)]
    })
}

fn broadcast_channel_constant(v: &DVector<f64>, grid: usize) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[(i / grid) * grid])
}

fn add_bias(y: &mut DMatrix<f64>, b: &DVector<f64>) {
    for (j, mut col) in y.column_iter_mut().enumerate() {
        col.add_scalar_mut(b[j]);
    }
}

fn activate(act: Act, y: &DMatrix<f64>) -> DMatrix<f64> {
    match act {
        Act::Softplus(beta) => y.map(|v| softplus(v, beta)),
        Act::Symplectic(beta) => {
            let m = y.ncols() / 2;
            let mut out = y.clone();
            for r in 0..y.nrows() {
                for i in 0..m {
                    let (p, q) = symplectic_softplus_point(y[(r, i)], y[(r, m + i)], beta);
                    out[(r, i)] = p;
                    out[(r, m + i)] = q;
                }
            }
            out
        }
    }
}

fn activate_vjp(act: Act, y: &DMatrix<f64>, d_out: &DMatrix<f64>) -> DMatrix<f64> {
    match act {
        Act::Softplus(beta) => y.zip_map(d_out, |v, d| d * sigmoid(beta * v)),
        Act::Symplectic(beta) => {
            let m = y.ncols() / 2;
            let mut out = d_out.clone();
            for r in 0..y.nrows() {
                for i in 0..m {
                    let (dp, dq) =
                        symplectic_softplus_vjp(y[(r, i)], y[(r, m + i)], beta, d_out[(r, i)], d_out[(r, m + i)]);
                    out[(r, i)] = dp;
                    out[(r, m + i)] = dq;
                }
            }
            out
        }
    }
}

fn pack(dst: &mut Vec<f64>, src: &[f64]) {
    dst.extend_from_slice(src);
}

fn unpack(dst: &mut [f64], src: &[f64], pos: &mut usize) {
    dst.copy_from_slice(&src[*pos..*pos + dst.len()]);
    *pos += dst.len();
}

fn log_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    values.iter().map(|v| v - lse).collect()
}

/// Cross-entropy of one logit vector and its gradient.
pub fn cross_entropy(values: &[f64], label: usize) -> (f64, Vec<f64>) {
    let ls = log_softmax(values);
    let mut grad: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
    grad[label] -= 1.0;
    (-ls[label], grad)
}

impl Model {
    /// Fresh parameters: Kaiming-uniform weights and `U(±1/√fan_in)` biases.
    /// `spnn` parameters are additionally scaled by 0.1.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let g = config.grid_size;
        let m = config.modes();
        let l = config.layers;
        let mut layers = Vec::with_capacity(l);
        match config.model_kind {
            ModelKind::Bnn => {
                let mut dims = vec![g];
                dims.extend(std::iter::repeat(m).take(l - 1));
                dims.push(config.classes);
                for w in dims.windows(2) {
                    let (fan_in, out) = (w[0], w[1]);
                    layers.push(LayerParams::Dense {
                        w: kaiming(&mut rng, out, fan_in, fan_in, 1.0),
                        b: uniform_vec(&mut rng, out, fan_in, 1.0),
                    });
                }
            }
            ModelKind::Pnn | ModelKind::Spnn => {
                let spnn = config.model_kind == ModelKind::Spnn;
                let scale = if spnn { 0.1 } else { 1.0 };
                let width = if spnn { 2 * m } else { m };
                for _ in 0..l {
                    let mut a = kaiming(&mut rng, m, m, m, scale);
                    let (mut b, mut c) = if spnn {
                        (kaiming(&mut rng, m, m, m, scale), kaiming(&mut rng, m, m, m, scale))
                    } else {
                        (DMatrix::zeros(m, m), DMatrix::zeros(m, m))
                    };
                    let mut bias = uniform_vec(&mut rng, width, width, scale);
                    if config.equivariant {
                        a = broadcast_block_circulant(&a, g);
                        b = broadcast_block_circulant(&b, g);
                        c = broadcast_block_circulant(&c, g);
                        bias = broadcast_channel_constant(&bias, g);
                    }
                    layers.push(LayerParams::Symplectic { gen: BlockGenerator::new(a, b, c)?, bias });
                }
            }
        }
        Ok(Self { config, layers })
    }

    /// Check that the layer shapes agree with the configuration.
    pub fn validate(&self) -> Result<(), NetError> {
        self.config.validate()?;
        let cfg = &self.config;
        if self.layers.len() != cfg.layers {
            return Err(NetError::Dimension(format!("{} layers stored, {} configured", self.layers.len(), cfg.layers)));
        }
        let m = cfg.modes();
        for (i, layer) in self.layers.iter().enumerate() {
            let ok = match (cfg.model_kind, layer) {
                (ModelKind::Bnn, LayerParams::Dense { w, b }) => {
                    let fan_in = if i == 0 { cfg.grid_size } else { m };
                    let out = if i + 1 == cfg.layers { cfg.classes } else { m };
                    w.shape() == (out, fan_in) && b.len() == out
                }
                (ModelKind::Pnn, LayerParams::Symplectic { gen, bias }) => {
                    gen.modes() == m && bias.len() == m && gen.is_block_diagonal()
                }
                (ModelKind::Spnn, LayerParams::Symplectic { gen, bias }) => gen.modes() == m && bias.len() == 2 * m,
                _ => false,
            };
            if !ok {
                return Err(NetError::Dimension(format!("layer {i} does not match a {} network", cfg.model_kind)));
            }
        }
        Ok(())
    }

    /// The matrix each layer applies: `W`, `exp(A)` or `exp(X)`.
    pub fn layer_matrices(&self) -> Result<Vec<DMatrix<f64>>, NetError> {
        self.layers
            .iter()
            .map(|layer| match (self.config.model_kind, layer) {
                (_, LayerParams::Dense { w, .. }) => Ok(w.clone()),
                (ModelKind::Pnn, LayerParams::Symplectic { gen, .. }) => Ok(matrix_exp(&gen.a)?),
                (_, LayerParams::Symplectic { gen, .. }) => Ok(matrix_exp(&gen.generator())?),
            })
            .collect()
    }

    fn plan(&self) -> Result<Plan, NetError> {
        let cfg = &self.config;
        let weights = self.layer_matrices()?;
        let biases = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Dense { b, .. } => b.clone(),
                LayerParams::Symplectic { bias, .. } => bias.clone(),
            })
            .collect();
        let (act, pool, readout) = match cfg.model_kind {
            ModelKind::Bnn => (Act::Softplus(cfg.beta), None, (0..cfg.classes).collect()),
            ModelKind::Pnn => (
                Act::Softplus(cfg.beta),
                cfg.pooling.then(|| position_pooling(cfg.channels, cfg.grid_size)),
                (0..cfg.classes).map(|c| cfg.readout_index(c)).collect(),
            ),
            ModelKind::Spnn => (
                Act::Symplectic(cfg.beta),
                cfg.pooling.then(|| phase_pooling(cfg.channels, cfg.grid_size)),
                (0..cfg.classes).map(|c| cfg.readout_index(c)).collect(),
            ),
        };
        Ok(Plan { weights, biases, pool, act, readout })
    }

    fn rows_per_example(&self) -> usize {
        match self.config.model_kind {
            ModelKind::Bnn => 1,
            _ => self.config.n_samples,
        }
    }

    /// Input rows for one example from its sampling distribution and noise.
    fn input_rows(&self, post: &GpPosterior, seed: u64) -> Result<DMatrix<f64>, NetError> {
        let cfg = &self.config;
        if post.len() != cfg.grid_size {
            return Err(NetError::Dimension(format!(
                "posterior has {} grid points, network expects {}",
                post.len(),
                cfg.grid_size
            )));
        }
        match cfg.model_kind {
            ModelKind::Bnn => Ok(DMatrix::from_row_slice(1, post.len(), post.mean.as_slice())),
            _ => {
                let dist = build_sampling_distribution(post, cfg.channels)?;
                self.distribution_rows(&dist, seed)
            }
        }
    }

    fn distribution_rows(&self, dist: &SamplingDistribution, seed: u64) -> Result<DMatrix<f64>, NetError> {
        let cfg = &self.config;
        let eps = standard_normals(cfg.n_samples, 2 * dist.modes(), seed);
        match cfg.model_kind {
            ModelKind::Bnn => Err(NetError::Config("bnn consumes the posterior mean, not samples".into())),
            ModelKind::Pnn => dist.transform_positions(&eps),
            ModelKind::Spnn => Ok(dist.transform(&eps)?.into_matrix()),
        }
    }

    fn stack_inputs(&self, posts: &[&GpPosterior], seeds: &[u64]) -> Result<DMatrix<f64>, NetError> {
        if posts.len() != seeds.len() {
            return Err(NetError::Dimension("one seed per example is required".into()));
        }
        let rows = self.rows_per_example();
        let blocks: Vec<DMatrix<f64>> =
            posts.iter().zip(seeds).map(|(p, s)| self.input_rows(p, *s)).collect::<Result<_, _>>()?;
        let width = blocks.first().map_or(0, |b| b.ncols());
        let mut z = DMatrix::zeros(rows * posts.len(), width);
        for (e, b) in blocks.iter().enumerate() {
            z.view_mut((e * rows, 0), (rows, width)).copy_from(b);
        }
        Ok(z)
    }

    fn run(plan: &Plan, z0: DMatrix<f64>, keep: bool) -> (Option<Tape>, DMatrix<f64>) {
        let n = plan.weights.len();
        let mut tape = Tape { inputs: Vec::new(), pre: Vec::new() };
        let mut z = z0;
        for l in 0..n {
            if l + 1 == n {
                if let Some(p) = &plan.pool {
                    z = &z * p.transpose();
                }
            }
            let mut y = &z * plan.weights[l].transpose();
            add_bias(&mut y, &plan.biases[l]);
            if keep {
                tape.inputs.push(z);
            }
            if l + 1 == n {
                return (keep.then_some(tape), y);
            }
            z = activate(plan.act, &y);
            if keep {
                tape.pre.push(y);
            }
        }
        unreachable!("a network has at least one layer")
    }

    fn read_logits(&self, plan: &Plan, out: &DMatrix<f64>, n_examples: usize) -> Result<Vec<Logits>, NetError> {
        let rows = self.rows_per_example();
        let mut all = Vec::with_capacity(n_examples);
        for e in 0..n_examples {
            let mut values = Vec::with_capacity(plan.readout.len());
            let mut std_err = Vec::with_capacity(plan.readout.len());
            for &idx in &plan.readout {
                let col = out.view((e * rows, idx), (rows, 1));
                let mean = col.sum() / rows as f64;
                let var = if rows > 1 {
                    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1) as f64
                } else {
                    0.0
                };
                if !mean.is_finite() {
                    return Err(NetError::NonFinite(format!("logit {idx} of example {e}")));
                }
                values.push(mean);
                std_err.push((var / rows as f64).sqrt());
            }
            all.push(Logits { values, std_err });
        }
        Ok(all)
    }

    /// Logits for one posterior; `seed` drives the Monte-Carlo draw.
    pub fn forward(&self, post: &GpPosterior, seed: u64) -> Result<Logits, NetError> {
        Ok(self.forward_batch(&[post], &[seed])?.remove(0))
    }

    pub fn forward_batch(&self, posts: &[&GpPosterior], seeds: &[u64]) -> Result<Vec<Logits>, NetError> {
        let plan = self.plan()?;
        let z0 = self.stack_inputs(posts, seeds)?;
        let (_, out) = Self::run(&plan, z0, false);
        self.read_logits(&plan, &out, posts.len())
    }

    /// Logits from an explicit sampling distribution (`pnn`/`spnn` only).
    pub fn forward_distribution(&self, dist: &SamplingDistribution, seed: u64) -> Result<Logits, NetError> {
        let plan = self.plan()?;
        let z0 = self.distribution_rows(dist, seed)?;
        let (_, out) = Self::run(&plan, z0, false);
        Ok(self.read_logits(&plan, &out, 1)?.remove(0))
    }

    /// Output of the `L − 1` (linear, nonlinearity) pairs, before pooling
    /// and the final layer (`spnn` only).
    pub fn hidden_features(&self, z: &SampleBatch) -> Result<SampleBatch, NetError> {
        if self.config.model_kind != ModelKind::Spnn {
            return Err(NetError::Config("hidden phase-space features exist for spnn only".into()));
        }
        let plan = self.plan()?;
        let mut x = z.matrix().clone();
        if x.ncols() != 2 * self.config.modes() {
            return Err(NetError::Dimension("batch does not match the network".into()));
        }
        for l in 0..plan.weights.len() - 1 {
            let mut y = &x * plan.weights[l].transpose();
            add_bias(&mut y, &plan.biases[l]);
            x = activate(plan.act, &y);
        }
        SampleBatch::new(z.channels(), z.grid(), x)
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, posts: &[&GpPosterior], labels: &[usize], seeds: &[u64]) -> Result<f64, NetError> {
        let logits = self.forward_batch(posts, seeds)?;
        let mut total = 0.0;
        for (l, &y) in logits.iter().zip(labels) {
            total += cross_entropy(&l.values, y).0;
        }
        Ok(total / labels.len() as f64)
    }

    /// Mean cross-entropy, its gradient in [`Model::flat_params`] order, and
    /// the logits it was computed from.
    pub fn loss_and_grad(
        &self,
        posts: &[&GpPosterior],
        labels: &[usize],
        seeds: &[u64],
    ) -> Result<(f64, Vec<f64>, Vec<Logits>), NetError> {
        if labels.len() != posts.len() || posts.is_empty() {
            return Err(NetError::Dimension("need one label per example and a non-empty batch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.config.classes) {
            return Err(NetError::Config(format!("label {bad} out of range")));
        }
        let plan = self.plan()?;
        let z0 = self.stack_inputs(posts, seeds)?;
        let (tape, out) = Self::run(&plan, z0, true);
        let tape = tape.expect("tape requested");
        let logits = self.read_logits(&plan, &out, posts.len())?;

        let rows = self.rows_per_example();
        let batch = posts.len() as f64;
        let mut loss = 0.0;
        let mut d_out = DMatrix::zeros(out.nrows(), out.ncols());
        for (e, (l, &y)) in logits.iter().zip(labels).enumerate() {
            let (ce, g) = cross_entropy(&l.values, y);
            loss += ce;
            for (c, &idx) in plan.readout.iter().enumerate() {
                let v = g[c] / (batch * rows as f64);
                d_out.view_mut((e * rows, idx), (rows, 1)).fill(v);
            }
        }
        loss /= batch;
        if !loss.is_finite() {
            return Err(NetError::NonFinite("loss".into()));
        }

        // Reverse sweep over the dense stages.
        let n = plan.weights.len();
        let mut stage_grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); n];
        let mut dy = d_out;
        for l in (0..n).rev() {
            let dw = dy.tr_mul(&tape.inputs[l]);
            let db = DVector::from_fn(dy.ncols(), |j, _| dy.column(j).sum());
            if l > 0 {
                let mut dz = &dy * &plan.weights[l];
                if l + 1 == n {
                    if let Some(p) = &plan.pool {
                        dz = &dz * p;
                    }
                }
                dy = activate_vjp(plan.act, &tape.pre[l - 1], &dz);
            }
            stage_grads[l] = (dw, db);
        }

        let mut grad = Vec::with_capacity(self.param_count());
        let cfg = &self.config;
        for (layer, (dw, db)) in self.layers.iter().zip(stage_grads) {
            match layer {
                LayerParams::Dense { .. } => {
                    pack(&mut grad, dw.as_slice());
                    pack(&mut grad, db.as_slice());
                }
                LayerParams::Symplectic { gen, .. } => {
                    let m = gen.modes();
                    let (mut da, mut db_blk, mut dc) = if cfg.model_kind == ModelKind::Pnn {
                        (expm_pullback(&gen.a, &dw)?, None, None)
                    } else {
                        let gx = expm_pullback(&gen.generator(), &dw)?;
                        let g11 = gx.view((0, 0), (m, m));
                        let g22 = gx.view((m, m), (m, m));
                        (
                            g11 - g22.transpose(),
                            Some(symmetrize(&gx.view((0, m), (m, m)).into_owned())),
                            Some(symmetrize(&gx.view((m, 0), (m, m)).into_owned())),
                        )
                    };
                    let mut dbias = db;
                    if cfg.equivariant {
                        let (ch, g) = (cfg.channels, cfg.grid_size);
                        da = project_block_circulant(&da, ch, g);
                        db_blk = db_blk.map(|x| project_block_circulant(&x, ch, g));
                        dc = dc.map(|x| project_block_circulant(&x, ch, g));
                        dbias = project_channel_constant(&dbias, g);
                    }
                    pack(&mut grad, da.as_slice());
                    if let (Some(b), Some(c)) = (db_blk, dc) {
                        pack(&mut grad, b.as_slice());
                        pack(&mut grad, c.as_slice());
                    }
                    pack(&mut grad, dbias.as_slice());
                }
            }
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("gradient".into()));
        }
        Ok((loss, grad, logits))
    }

    /// Trainable parameters, flattened layer by layer (column-major blocks;
    /// `pnn` layers omit the zero `B`, `C` blocks).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { w, b } => {
                    pack(&mut out, w.as_slice());
                    pack(&mut out, b.as_slice());
                }
                LayerParams::Symplectic { gen, bias } => {
                    pack(&mut out, gen.a.as_slice());
                    if self.config.model_kind == ModelKind::Spnn {
                        pack(&mut out, gen.b.as_slice());
                        pack(&mut out, gen.c.as_slice());
                    }
                    pack(&mut out, bias.as_slice());
                }
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("parameters".into()));
        }
        let spnn = self.config.model_kind == ModelKind::Spnn;
        let mut pos = 0;
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { w, b } => {
                    unpack(w.as_mut_slice(), params, &mut pos);
                    unpack(b.as_mut_slice(), params, &mut pos);
                }
                LayerParams::Symplectic { gen, bias } => {
                    unpack(gen.a.as_mut_slice(), params, &mut pos);
                    if spnn {
                        unpack(gen.b.as_mut_slice(), params, &mut pos);
                        unpack(gen.c.as_mut_slice(), params, &mut pos);
                    }
                    unpack(bias.as_mut_slice(), params, &mut pos);
                }
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let spnn = self.config.model_kind == ModelKind::Spnn;
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Dense { w, b } => w.len() + b.len(),
                LayerParams::Symplectic { gen, bias } => {
                    gen.a.len() * if spnn { 3 } else { 1 } + bias.len()
                }
            })
            .sum()
    }
}
