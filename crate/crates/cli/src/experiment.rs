//! Sweep over sampling fractions, mask replicates and model kinds.
//!
//! A cell is one `(fraction, replicate)` pair. Its GP fit and posteriors are
//! computed once and shared by every model kind through [`GpCache`].

use std::collections::HashMap;
use std::path::Path;
use std::rc::Rc;

use phasenet_core::gp::{fit_gp, gp_posterior, uniform_grid, IrregularSeries, KernelSpec};
use phasenet_core::net::{evaluate, train, EpochStats, Example, Model, ModelKind, NetConfig, TrainConfig};
use phasenet_core::rng::derive_seed;
use serde::Serialize;

use crate::config::{Dataset, ExperimentConfig};
use crate::data::{generate_synthetic_control, read_series_csv, sample_mask, subsample};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Vec<IrregularSeries>,
    pub test: Vec<IrregularSeries>,
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets, HarnessError> {
    let (train, test) = match &cfg.dataset {
        Dataset::SyntheticControl => (
            generate_synthetic_control(cfg.n_per_class, cfg.series_length, cfg.data_seed_train)?,
            generate_synthetic_control(cfg.n_per_class, cfg.series_length, cfg.data_seed_test)?,
        ),
        Dataset::Csv { train, test } => (read_series_csv(train)?, read_series_csv(test)?),
    };
    for s in train.iter().chain(&test) {
        match s.label {
            Some(l) if l < cfg.net.classes => {}
            other => {
                return Err(HarnessError::Validation(format!("label {other:?} outside 0..{}", cfg.net.classes)));
            }
        }
    }
    Ok(Datasets { train, test })
}

/// Seeds of one replicate; every random choice in a cell derives from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicateSeeds {
    pub mask_train: u64,
    pub mask_test: u64,
    pub model: u64,
    pub sampler: u64,
}

impl ReplicateSeeds {
    pub fn new(cfg: &ExperimentConfig, replicate: usize) -> Self {
        let r = replicate as u64;
        Self {
            mask_train: derive_seed(cfg.seed_mask_train, r),
            mask_test: derive_seed(cfg.seed_mask_test, r),
            model: derive_seed(cfg.seed_model, r),
            sampler: derive_seed(cfg.seed_sampler, r),
        }
    }
}

/// Subsample every series with one shared mask per set. Series of equal
/// length receive identical masks because the seed is shared.
fn mask_all(series: &[IrregularSeries], fraction: f64, seed: u64) -> Result<Vec<IrregularSeries>, HarnessError> {
    series.iter().map(|s| subsample(s, &sample_mask(s.len(), fraction, seed)?)).collect()
}

/// Fitted kernel and grid posteriors for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub kernel: KernelSpec,
    pub gp_history: Vec<f64>,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn prepare_cell(
    cfg: &ExperimentConfig,
    data: &Datasets,
    fraction: f64,
    seeds: &ReplicateSeeds,
) -> Result<CellData, HarnessError> {
    let train_obs = mask_all(&data.train, fraction, seeds.mask_train)?;
    let test_obs = mask_all(&data.test, fraction, seeds.mask_test)?;
    let mut opts = cfg.gp;
    opts.seed = derive_seed(cfg.gp.seed, seeds.mask_train);
    let fit = fit_gp(&train_obs, &cfg.kernel, cfg.noise, &opts)?;
    let grid = uniform_grid(cfg.net.grid_size);
    let to_examples = |set: &[IrregularSeries]| -> Result<Vec<Example>, HarnessError> {
        set.iter()
            .map(|s| {
                let post = gp_posterior(&fit.spec, s, cfg.noise, &grid)?;
                Ok(Example { post, label: s.label.expect("labels checked on load") })
            })
            .collect()
    };
    Ok(CellData { kernel: fit.spec, gp_history: fit.history, train: to_examples(&train_obs)?, test: to_examples(&test_obs)? })
}

/// Memoised [`prepare_cell`] keyed by `(fraction, replicate)`.
#[derive(Debug, Default)]
pub struct GpCache {
    cells: HashMap<(u64, usize), Rc<CellData>>,
    pub hits: usize,
    pub misses: usize,
}

impl GpCache {
    pub fn get(
        &mut self,
        cfg: &ExperimentConfig,
        data: &Datasets,
        fraction: f64,
        replicate: usize,
    ) -> Result<Rc<CellData>, HarnessError> {
        let key = (fraction.to_bits(), replicate);
        if let Some(c) = self.cells.get(&key) {
            self.hits += 1;
            return Ok(c.clone());
        }
        self.misses += 1;
        let cell = Rc::new(prepare_cell(cfg, data, fraction, &ReplicateSeeds::new(cfg, replicate))?);
        self.cells.insert(key, cell.clone());
        Ok(cell)
    }
}

pub fn net_config(cfg: &ExperimentConfig, kind: ModelKind) -> NetConfig {
    NetConfig { model_kind: kind, ..cfg.net.clone() }
}

pub fn train_config(cfg: &ExperimentConfig, seeds: &ReplicateSeeds) -> TrainConfig {
    TrainConfig { shuffle_seed: derive_seed(seeds.sampler, 0), sampler_seed: derive_seed(seeds.sampler, 1), ..cfg.train.clone() }
}

pub fn eval_seed(seeds: &ReplicateSeeds) -> u64 {
    derive_seed(seeds.sampler, 2)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub curve: Vec<EpochStats>,
    /// Test accuracy in percent.
    pub accuracy: f64,
}

/// Initialise, train and score one model on a prepared cell.
pub fn run_model(
    cfg: &ExperimentConfig,
    cell: &CellData,
    kind: ModelKind,
    seeds: &ReplicateSeeds,
) -> Result<TrainedModel, HarnessError> {
    let mut model = Model::init(net_config(cfg, kind), seeds.model)?;
    let curve = train(&mut model, &cell.train, Some(&cell.test), &train_config(cfg, seeds))?;
    let accuracy = 100.0 * evaluate(&model, &cell.test, eval_seed(seeds))?.accuracy;
    Ok(TrainedModel { model, curve, accuracy })
}

/// One `(model, fraction, replicate)` outcome, as written to `cells.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub model: ModelKind,
    pub fraction: f64,
    pub replicate: usize,
    pub seed_mask_train: u64,
    pub seed_mask_test: u64,
    pub seed_model: u64,
    pub seed_sampler: u64,
    pub lengthscale: Option<f64>,
    pub variance: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate over replicates, as written to `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub model: ModelKind,
    pub fraction: f64,
    pub mean: f64,
    /// Sample standard deviation (zero for a single replicate).
    pub std: f64,
    #[serde(skip)]
    pub n_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<CellRow>,
    pub results: Vec<ResultRow>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Run every cell in canonical order (fraction, replicate, model).
pub fn run_sweep(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<SweepOutcome, HarnessError> {
    cfg.validate()?;
    let data = load_datasets(cfg)?;
    let mut cache = GpCache::default();
    let mut cells = Vec::new();
    for &fraction in &cfg.sweep {
        for replicate in 0..cfg.n_seeds {
            let seeds = ReplicateSeeds::new(cfg, replicate);
            for &kind in &cfg.models {
                let row = |accuracy, kernel: Option<KernelSpec>, error| CellRow {
                    model: kind,
                    fraction,
                    replicate,
                    seed_mask_train: seeds.mask_train,
                    seed_mask_test: seeds.mask_test,
                    seed_model: seeds.model,
                    seed_sampler: seeds.sampler,
                    lengthscale: kernel.map(|k| k.lengthscale),
                    variance: kernel.map(|k| k.variance),
                    accuracy,
                    error,
                };
                let outcome = cache
                    .get(cfg, &data, fraction, replicate)
                    .and_then(|cell| run_model(cfg, &cell, kind, &seeds).map(|t| (t.accuracy, cell.kernel)));
                let r = match outcome {
                    Ok((acc, kernel)) => row(Some(acc), Some(kernel), None),
                    Err(e) => row(None, None, Some(e.to_string())),
                };
                log(&format!(
                    "f={fraction} replicate={replicate} model={kind}: {}",
                    match (&r.accuracy, &r.error) {
                        (Some(a), _) => format!("{a:.2}%"),
                        (_, Some(e)) => format!("error: {e}"),
                        _ => unreachable!(),
                    }
                ));
                cells.push(r);
            }
        }
    }
    let results = aggregate(&cells, &cfg.sweep, &cfg.models);
    Ok(SweepOutcome { cells, results, cache_hits: cache.hits, cache_misses: cache.misses })
}

/// Mean and sample standard deviation of successful replicates.
pub fn aggregate(cells: &[CellRow], fractions: &[f64], models: &[ModelKind]) -> Vec<ResultRow> {
    let mut out = Vec::new();
    for &fraction in fractions {
        for &model in models {
            let acc: Vec<f64> = cells
                .iter()
                .filter(|c| c.model == model && c.fraction == fraction)
                .filter_map(|c| c.accuracy)
                .collect();
            let n = acc.len();
            let mean = if n > 0 { acc.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 { (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
            out.push(ResultRow { model, fraction, mean, std, n_seeds: n });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `results.csv`, `cells.csv` and `config.resolved` under `dir`.
pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, outcome: &SweepOutcome) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &outcome.results)?;
    write_csv(&dir.join("cells.csv"), &outcome.cells)?;
    std::fs::write(dir.join("config.resolved"), cfg.to_kv())?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[EpochStats]) -> Result<(), HarnessError> {
    write_csv(path, curve)
}
