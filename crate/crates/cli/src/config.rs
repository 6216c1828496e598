//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; list values are comma separated.
//! Every key has a default, and [`ExperimentConfig::to_kv`] writes the fully
//! resolved set so a run can be replayed from its snapshot.

use std::path::PathBuf;
use std::str::FromStr;

use phasenet_core::gp::{FitOptions, KernelFamily, KernelSpec, DEFAULT_NOISE};
use phasenet_core::net::{ModelKind, NetConfig, TrainConfig};

use crate::data::N_CLASSES;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    SyntheticControl,
    Csv { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub n_per_class: usize,
    pub series_length: usize,
    pub data_seed_train: u64,
    pub data_seed_test: u64,
    pub sampling_fraction: f64,
    pub sweep: Vec<f64>,
    pub n_seeds: usize,
    pub seed_mask_train: u64,
    pub seed_mask_test: u64,
    pub seed_model: u64,
    pub seed_sampler: u64,
    pub kernel: KernelSpec,
    pub noise: f64,
    pub gp: FitOptions,
    /// `model_kind` is overridden per cell by `models`.
    pub net: NetConfig,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::SyntheticControl,
            n_per_class: 50,
            series_length: 60,
            data_seed_train: 1,
            data_seed_test: 2,
            sampling_fraction: 1.0,
            sweep: vec![1.0, 0.5],
            n_seeds: 3,
            seed_mask_train: 10,
            seed_mask_test: 20,
            seed_model: 30,
            seed_sampler: 40,
            kernel: KernelSpec::default(),
            noise: DEFAULT_NOISE,
            gp: FitOptions::default(),
            net: NetConfig::default(),
            models: ModelKind::ALL.to_vec(),
            train: TrainConfig { epochs: 20, lr: 1e-2, batch_size: 50, shuffle_seed: 0, sampler_seed: 0, eval_every: 0 },
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Validation(format!("invalid value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut csv_train = None;
        let mut csv_test = None;
        let mut dataset = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Validation(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "dataset" => dataset = Some(v.to_string()),
                "train_csv" => csv_train = Some(PathBuf::from(v)),
                "test_csv" => csv_test = Some(PathBuf::from(v)),
                _ => cfg.set(k, v)?,
            }
        }
        match dataset.as_deref() {
            None | Some("synthetic_control") => {}
            Some("csv") => match (csv_train, csv_test) {
                (Some(train), Some(test)) => cfg.dataset = Dataset::Csv { train, test },
                _ => return Err(HarnessError::Validation("dataset = csv needs train_csv and test_csv".into())),
            },
            Some(other) => return Err(HarnessError::Validation(format!("unknown dataset `{other}`"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one scalar key; `dataset` and CSV paths go through [`parse`](Self::parse).
    pub fn set(&mut self, k: &str, v: &str) -> Result<(), HarnessError> {
        match k {
            "n_per_class" => self.n_per_class = parse(k, v)?,
            "series_length" => self.series_length = parse(k, v)?,
            "data_seed_train" => self.data_seed_train = parse(k, v)?,
            "data_seed_test" => self.data_seed_test = parse(k, v)?,
            "grid_size" => self.net.grid_size = parse(k, v)?,
            "sampling_fraction" => self.sampling_fraction = parse(k, v)?,
            "sweep" => self.sweep = parse_list(k, v)?,
            "n_seeds" => self.n_seeds = parse(k, v)?,
            "seed_mask_train" => self.seed_mask_train = parse(k, v)?,
            "seed_mask_test" => self.seed_mask_test = parse(k, v)?,
            "seed_model" => self.seed_model = parse(k, v)?,
            "seed_sampler" => self.seed_sampler = parse(k, v)?,
            "kernel" => {
                self.kernel.family = match v {
                    "matern_half" => KernelFamily::MaternHalf,
                    "rbf" => KernelFamily::Rbf,
                    _ => return Err(HarnessError::Validation(format!("unknown kernel `{v}`"))),
                }
            }
            "lengthscale" => self.kernel.lengthscale = parse(k, v)?,
            "variance" => self.kernel.variance = parse(k, v)?,
            "noise" => self.noise = parse(k, v)?,
            "gp_epochs" => self.gp.epochs = parse(k, v)?,
            "gp_step" => self.gp.step = parse(k, v)?,
            "gp_batch_size" => self.gp.batch_size = parse(k, v)?,
            "gp_seed" => self.gp.seed = parse(k, v)?,
            "layers" => self.net.layers = parse(k, v)?,
            "channels" => self.net.channels = parse(k, v)?,
            "beta" => self.net.beta = parse(k, v)?,
            "n_samples" => self.net.n_samples = parse(k, v)?,
            "equivariant" => self.net.equivariant = parse(k, v)?,
            "pooling" => self.net.pooling = parse(k, v)?,
            "model" => self.net.model_kind = parse(k, v)?,
            "models" => self.models = parse_list(k, v)?,
            "epochs" => self.train.epochs = parse(k, v)?,
            "lr" => self.train.lr = parse(k, v)?,
            "batch_size" => self.train.batch_size = parse(k, v)?,
            "eval_every" => self.train.eval_every = parse(k, v)?,
            other => return Err(HarnessError::Validation(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !frac_ok(self.sampling_fraction) || !self.sweep.iter().all(|&f| frac_ok(f)) {
            return bad("sampling fractions must lie in (0, 1]".into());
        }
        if self.n_seeds == 0 || self.models.is_empty() {
            return bad("n_seeds and models must be non-empty".into());
        }
        if self.series_length < 8 || self.n_per_class == 0 {
            return bad("series_length must be at least 8 and n_per_class positive".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise variance must be non-negative, got {}", self.noise));
        }
        if self.gp.batch_size == 0 || self.train.batch_size == 0 || !(self.train.lr > 0.0) || !(self.gp.step > 0.0) {
            return bad("batch sizes and step sizes must be positive".into());
        }
        if self.net.classes != N_CLASSES && self.dataset == Dataset::SyntheticControl {
            return bad(format!("synthetic control has {N_CLASSES} classes"));
        }
        self.kernel.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
        self.net.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
        Ok(())
    }

    /// Resolved configuration in the input format.
    pub fn to_kv(&self) -> String {
        let mut lines: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| lines.push((k.to_string(), v));
        match &self.dataset {
            Dataset::SyntheticControl => put("dataset", "synthetic_control".into()),
            Dataset::Csv { train, test } => {
                put("dataset", "csv".into());
                put("train_csv", train.display().to_string());
                put("test_csv", test.display().to_string());
            }
        }
        put("n_per_class", self.n_per_class.to_string());
        put("series_length", self.series_length.to_string());
        put("data_seed_train", self.data_seed_train.to_string());
        put("data_seed_test", self.data_seed_test.to_string());
        put("grid_size", self.net.grid_size.to_string());
        put("sampling_fraction", self.sampling_fraction.to_string());
        put("sweep", join(&self.sweep));
        put("n_seeds", self.n_seeds.to_string());
        put("seed_mask_train", self.seed_mask_train.to_string());
        put("seed_mask_test", self.seed_mask_test.to_string());
        put("seed_model", self.seed_model.to_string());
        put("seed_sampler", self.seed_sampler.to_string());
        put(
            "kernel",
            match self.kernel.family {
                KernelFamily::MaternHalf => "matern_half".into(),
                KernelFamily::Rbf => "rbf".into(),
            },
        );
        put("lengthscale", self.kernel.lengthscale.to_string());
        put("variance", self.kernel.variance.to_string());
        put("noise", self.noise.to_string());
        put("gp_epochs", self.gp.epochs.to_string());
        put("gp_step", self.gp.step.to_string());
        put("gp_batch_size", self.gp.batch_size.to_string());
        put("gp_seed", self.gp.seed.to_string());
        put("layers", self.net.layers.to_string());
        put("channels", self.net.channels.to_string());
        put("beta", self.net.beta.to_string());
        put("n_samples", self.net.n_samples.to_string());
        put("equivariant", self.net.equivariant.to_string());
        put("pooling", self.net.pooling.to_string());
        put("model", self.net.model_kind.to_string());
        put("models", join(&self.models));
        put("epochs", self.train.epochs.to_string());
        put("lr", self.train.lr.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("eval_every", self.train.eval_every.to_string());
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
