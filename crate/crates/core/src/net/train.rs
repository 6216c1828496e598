//! Minibatch Adam on the cross-entropy of Monte-Carlo logits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::NetError;
use crate::gp::GpPosterior;
use crate::rng::{self, derive_seed};

/// A posterior over the grid together with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub post: GpPosterior,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Drives minibatch order.
    pub shuffle_seed: u64,
    /// Drives the Monte-Carlo draws of every step.
    pub sampler_seed: u64,
    /// Evaluate on the held-out set every this many epochs (0: never).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 5e-3, batch_size: 50, shuffle_seed: 0, sampler_seed: 1, eval_every: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the logits seen during the epoch, in `[0, 1]`.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Plain Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descend along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

const EVAL_CHUNK: usize = 50;

/// Accuracy and mean loss with one fixed Monte-Carlo draw per example.
pub fn evaluate(model: &Model, data: &[Example], seed: u64) -> Result<Evaluation, NetError> {
    if data.is_empty() {
        return Err(NetError::Config("cannot evaluate on an empty set".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (k, chunk) in data.chunks(EVAL_CHUNK).enumerate() {
        let posts: Vec<&GpPosterior> = chunk.iter().map(|e| &e.post).collect();
        let seeds: Vec<u64> = (0..chunk.len()).map(|i| derive_seed(seed, (k * EVAL_CHUNK + i) as u64)).collect();
        let logits = model.forward_batch(&posts, &seeds)?;
        for (l, ex) in logits.iter().zip(chunk) {
            if l.argmax() == ex.label {
                correct += 1;
            }
            loss += super::model::cross_entropy(&l.values, ex.label).0;
        }
    }
    Ok(Evaluation { accuracy: correct as f64 / data.len() as f64, loss: loss / data.len() as f64 })
}

/// Train in place and return one row per epoch.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    test_set: Option<&[Example]>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, NetError> {
    model.validate()?;
    if cfg.epochs > 0 && train_set.is_empty() {
        return Err(NetError::Config("training set is empty".into()));
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(NetError::Config("learning rate and batch size must be positive".into()));
    }
    let mut params = model.flat_params();
    let mut adam = Adam::new(params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = rng::seeded(derive_seed(cfg.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        let epoch_seed = derive_seed(cfg.sampler_seed, epoch as u64);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let posts: Vec<&GpPosterior> = chunk.iter().map(|&i| &train_set[i].post).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            let seeds: Vec<u64> = chunk.iter().map(|&i| derive_seed(epoch_seed, i as u64)).collect();
            let (loss, grad, logits) = model.loss_and_grad(&posts, &labels, &seeds).map_err(|e| match e {
                NetError::NonFinite(what) => NetError::NonFinite(format!("{what} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
            correct += logits.iter().zip(&labels).filter(|(l, y)| l.argmax() == **y).count();
            adam.step(&mut params, &grad);
            model.set_flat_params(&params).map_err(|_| {
                NetError::NonFinite(format!("parameters after epoch {epoch}, batch {b}"))
            })?;
        }
        let test_acc = match test_set {
            Some(t) if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 => {
                Some(evaluate(model, t, derive_seed(cfg.sampler_seed, u64::MAX))?.accuracy)
            }
            _ => None,
        };
        curve.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc,
        });
    }
    Ok(curve)
}
