use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use phasenet_cli::compile::{random_linear_layer, verify_program};
use phasenet_cli::config::ExperimentConfig;
use phasenet_cli::data::write_series_csv;
use phasenet_cli::experiment::{
    eval_seed, load_datasets, prepare_cell, run_model, run_sweep, write_curve, write_sweep, Datasets, ReplicateSeeds,
};
use phasenet_cli::io::{read_json, write_json, Checkpoint, LinearLayerRecord};
use phasenet_cli::sigma_curve::{emit_sigma_curve, linspace, EpsPolicy};
use phasenet_cli::HarnessError;
use phasenet_core::gp::{KernelSpec, PosteriorRecord};
use phasenet_core::net::evaluate;
use phasenet_photonic::{compile_linear, compile_nonlinearity, gate_count, GateProgram};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "phasenet", version, about = "Phase-space networks on GP-interpolated time series, and their photonic compilation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut text = match &self.config {
            Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        for o in &self.overrides {
            if !o.contains('=') {
                return Err(HarnessError::Validation(format!("override `{o}` is not KEY=VALUE")));
            }
            text.push('\n');
            text.push_str(o);
        }
        ExperimentConfig::parse(&text)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the train and test series as long-format CSV.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit GP hyperparameters on the masked training set.
    GpFit {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also export every grid posterior as JSON.
        #[arg(long)]
        posteriors: bool,
    },
    /// Train one model (`model` key) at `sampling_fraction`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a checkpoint on the masked test set.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Every fraction x replicate x model; writes results.csv and cells.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Tabulate the truncated nonlinearity against softplus.
    EmitSigmaCurve {
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Comma-separated repetition counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
        m: Vec<usize>,
        /// `unit` for ε = 1/(2m), or a fixed positive value.
        #[arg(long, default_value = "unit")]
        eps: String,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = 151)]
        points: usize,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower `z ↦ S z + ξ` to rotations, phases, squeezers and displacements.
    CompileLinear {
        /// JSON `{modes, symplectic: row-major, displacement}`.
        #[arg(long, conflicts_with = "random_modes")]
        input: Option<PathBuf>,
        /// Compile a random layer on this many modes instead.
        #[arg(long)]
        random_modes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also save the compiled layer as JSON (useful with --random-modes).
        #[arg(long)]
        save_layer: Option<PathBuf>,
    },
    /// Emit the Trotterised softplus gadget program.
    CompileNonlinearity {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate a Gaussian program and report residuals and gate counts.
    VerifyProgram {
        #[arg(long)]
        program: PathBuf,
        /// Layer JSON to compare against.
        #[arg(long)]
        layer: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct GpFitRecord {
    kernel: KernelSpec,
    noise: f64,
    fraction: f64,
    replicate: usize,
    /// Mean log marginal likelihood before training and after each epoch.
    history: Vec<f64>,
}

#[derive(Serialize)]
struct LabelledPosterior {
    label: usize,
    #[serde(flatten)]
    posterior: PosteriorRecord,
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::GenData { cfg, out_dir } => {
            let cfg = cfg.load()?;
            let Datasets { train, test } = load_datasets(&cfg)?;
            create_dir(&out_dir)?;
            write_series_csv(&out_dir.join("train.csv"), &train)?;
            write_series_csv(&out_dir.join("test.csv"), &test)?;
            write_text(&out_dir.join("config.resolved"), &cfg.to_kv())?;
            println!("wrote {} train and {} test series to {}", train.len(), test.len(), out_dir.display());
        }
        Command::GpFit { cfg, replicate, out_dir, posteriors } => {
            let cfg = cfg.load()?;
            let data = load_datasets(&cfg)?;
            let seeds = ReplicateSeeds::new(&cfg, replicate);
            let cell = prepare_cell(&cfg, &data, cfg.sampling_fraction, &seeds)?;
            create_dir(&out_dir)?;
            let rec = GpFitRecord {
                kernel: cell.kernel,
                noise: cfg.noise,
                fraction: cfg.sampling_fraction,
                replicate,
                history: cell.gp_history.clone(),
            };
            write_json(&out_dir.join("gp_fit.json"), &rec)?;
            if posteriors {
                for (name, set) in [("train", &cell.train), ("test", &cell.test)] {
                    let recs: Vec<LabelledPosterior> = set
                        .iter()
                        .map(|e| LabelledPosterior { label: e.label, posterior: e.post.to_record() })
                        .collect();
                    write_json(&out_dir.join(format!("posteriors_{name}.json")), &recs)?;
                }
            }
            write_text(&out_dir.join("config.resolved"), &cfg.to_kv())?;
            println!(
                "kernel {:?} lengthscale {} variance {} (objective {:.6} -> {:.6})",
                cell.kernel.family,
                cell.kernel.lengthscale,
                cell.kernel.variance,
                rec.history[0],
                rec.history.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            );
        }
        Command::Train { cfg, replicate, out_dir } => {
            let cfg = cfg.load()?;
            let data = load_datasets(&cfg)?;
            let seeds = ReplicateSeeds::new(&cfg, replicate);
            let cell = prepare_cell(&cfg, &data, cfg.sampling_fraction, &seeds)?;
            let trained = run_model(&cfg, &cell, cfg.net.model_kind, &seeds)?;
            create_dir(&out_dir)?;
            write_json(&out_dir.join("checkpoint.json"), &Checkpoint::new(&trained.model, seeds.model, cell.kernel, cfg.noise))?;
            write_curve(&out_dir.join("curve.csv"), &trained.curve)?;
            write_text(&out_dir.join("config.resolved"), &cfg.to_kv())?;
            println!("{} test accuracy {:.2}%", cfg.net.model_kind, trained.accuracy);
        }
        Command::Evaluate { cfg, checkpoint, replicate } => {
            let mut cfg = cfg.load()?;
            let ck: Checkpoint = read_json(&checkpoint)?;
            let model = ck.model()?;
            // Preprocess with the checkpoint's GP instead of refitting.
            cfg.kernel = ck.kernel;
            cfg.noise = ck.noise;
            cfg.gp.epochs = 0;
            cfg.net = ck.config.clone();
            let data = load_datasets(&cfg)?;
            let seeds = ReplicateSeeds::new(&cfg, replicate);
            let cell = prepare_cell(&cfg, &data, cfg.sampling_fraction, &seeds)?;
            let ev = evaluate(&model, &cell.test, eval_seed(&seeds))?;
            println!("{} test accuracy {:.2}% loss {:.6}", model.config.model_kind, 100.0 * ev.accuracy, ev.loss);
        }
        Command::Sweep { cfg, out_dir } => {
            let cfg = cfg.load()?;
            let outcome = run_sweep(&cfg, |line| eprintln!("{line}"))?;
            write_sweep(&out_dir, &cfg, &outcome)?;
            println!("model,fraction,mean,std");
            for r in &outcome.results {
                println!("{},{},{:.2},{:.2}", r.model, r.fraction, r.mean, r.std);
            }
            eprintln!("gp cache: {} misses, {} hits", outcome.cache_misses, outcome.cache_hits);
            if outcome.cells.iter().any(|c| c.error.is_some()) {
                return Err(HarnessError::Numerical("some cells failed; see cells.csv".into()));
            }
        }
        Command::EmitSigmaCurve { k, m, eps, x_min, x_max, points, out } => {
            let policy = match eps.as_str() {
                "unit" => EpsPolicy::UnitTime,
                v => EpsPolicy::Fixed(
                    v.parse().map_err(|_| HarnessError::Validation(format!("--eps must be `unit` or a number, got `{v}`")))?,
                ),
            };
            if !(x_min <= x_max) {
                return Err(HarnessError::Validation("x-min must not exceed x-max".into()));
            }
            let xs = linspace(x_min, x_max, points);
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
                    emit_sigma_curve(f, k, policy, &m, &xs)?;
                }
                None => emit_sigma_curve(std::io::stdout().lock(), k, policy, &m, &xs)?,
            }
        }
        Command::CompileLinear { input, random_modes, seed, out, save_layer } => {
            let (s, xi) = match (input, random_modes) {
                (Some(p), _) => read_json::<LinearLayerRecord>(&p)?.matrices()?,
                (None, Some(m)) if m > 0 => random_linear_layer(m, seed)?,
                _ => return Err(HarnessError::Validation("pass --input or a positive --random-modes".into())),
            };
            let c = compile_linear(&s, &xi)?;
            write_text(&out, &c.program.to_text())?;
            if let Some(p) = save_layer {
                write_json(&p, &LinearLayerRecord::new(&s, &xi))?;
            }
            let residual = (c.decomposition.reconstruct() - &s).amax();
            println!(
                "modes {} gates {} (raw {}) rotations {} squeezers {} bloch-messiah residual {residual:.3e}",
                c.program.modes,
                c.counts.pruned,
                c.counts.raw,
                c.program.count("ROTATION2"),
                c.program.count("SQUEEZE")
            );
        }
        Command::CompileNonlinearity { k, eps, m, beta, out } => {
            let p = compile_nonlinearity(k, eps, m, beta)?;
            write_text(&out, &p.to_text())?;
            println!("gates {} expected {}", p.len(), gate_count(k, m));
        }
        Command::VerifyProgram { program, layer } => {
            let text =
                std::fs::read_to_string(&program).map_err(|e| HarnessError::Io(format!("{}: {e}", program.display())))?;
            let prog = GateProgram::from_text(&text)?;
            let reference = layer.map(|p| read_json::<LinearLayerRecord>(&p)?.matrices()).transpose()?;
            let rep = verify_program(&prog, reference.as_ref())?;
            let mut so = std::io::stdout().lock();
            let _ = writeln!(so, "gates {}", rep.gates);
            for (k, n) in rep.counts.iter().filter(|c| c.1 > 0) {
                let _ = writeln!(so, "  {k} {n}");
            }
            let _ = writeln!(so, "symplectic residual {:.3e}", rep.symplectic_residual);
            if let (Some(mr), Some(cr)) = (rep.mean_residual, rep.cov_residual) {
                let _ = writeln!(so, "mean residual {mr:.3e}\ncov residual {cr:.3e}");
            }
            if !rep.ok() {
                return Err(HarnessError::Numerical("residual exceeds 1e-6".into()));
            }
        }
    }
    Ok(())
}
