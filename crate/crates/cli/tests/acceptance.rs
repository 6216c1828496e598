//! Acceptance criteria, one line of output per criterion.
//!
//! Runs without the libtest harness so the PASS/FAIL lines are always shown.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 7 9`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use phasenet_cli::config::ExperimentConfig;
use phasenet_cli::experiment::run_sweep;
use phasenet_cli::sigma_curve::{linspace, max_error, EpsPolicy};
use phasenet_core::gaussian::MeasurementRecord;
use phasenet_core::gp::{embed_posterior_state, kernel_matrix, uniform_grid, GpPosterior, KernelSpec};
use phasenet_core::net::layers::symplectic_softplus_point;
use phasenet_core::net::{pncnn_forward, ClassicalNet, Model, ModelKind, NetConfig};
use phasenet_core::rng::{self, derive_seed};
use phasenet_core::symplectic::{is_symplectic, symplectic_from_generator, BlockGenerator};
use phasenet_photonic::{
    bloch_messiah, compile_linear, compile_nonlinearity, gate_count, givens_decompose, order_gate_count,
    simulate_gaussian, Gate,
};
use phasenet_core::gaussian::GaussianState;
use phasenet_core::symplectic::PhaseDim;
use rand::seq::index;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn random_generator(rng: &mut rng::Rng, m: usize, scale: f64) -> BlockGenerator {
    let mut blk = || DMatrix::from_fn(m, m, |_, _| scale * rng.random_range(-1.0..1.0));
    BlockGenerator::new(blk(), blk(), blk()).unwrap()
}

fn random_layer(rng: &mut rng::Rng, m: usize) -> DMatrix<f64> {
    symplectic_from_generator(&random_generator(rng, m, 0.5 / (m as f64).sqrt())).unwrap()
}

fn prior_posterior(spec: &KernelSpec, n: usize) -> GpPosterior {
    let grid = uniform_grid(n);
    let k = kernel_matrix(spec, &grid, &grid).unwrap();
    GpPosterior::from_moments(grid, DVector::zeros(n), k).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let m = rng.random_range(1..=16);
        let s = symplectic_from_generator(&random_generator(&mut rng, m, 1.0 / (m as f64).sqrt())).unwrap();
        worst = worst.max(is_symplectic(&s, 1e-9).unwrap().residual);
    }
    let el = t.elapsed();
    outcome(worst <= 1e-9 && within(el, 10.0), format!("max ‖SJSᵀ-J‖∞ = {worst:.2e} over 500 layers, {:.2}s", el.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(2);
    let (mut min_eig, mut min_det) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let spec = KernelSpec::matern_half(rng.random_range(0.05..0.5), rng.random_range(0.5..2.0)).unwrap();
        let mut state = embed_posterior_state(&prior_posterior(&spec, n)).unwrap();
        let k = rng.random_range(1..=n);
        let sites = index::sample(&mut rng, n, k).into_vec();
        let values = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let noise = [1e-2, 1e-1, 1.0][rng.random_range(0..3)];
        state = state.condition(&MeasurementRecord::new(sites, values, noise)).unwrap();
        for _ in 0..rng.random_range(0..=5) {
            state = state.apply_symplectic(&random_layer(&mut rng, n)).unwrap();
        }
        let rep = state.report().unwrap();
        min_eig = min_eig.min(rep.min_uncertainty_eig);
        min_det = min_det.min(rep.det);
    }
    let el = t.elapsed();
    outcome(
        min_eig >= -1e-8 && min_det >= 1.0 - 1e-6 && within(el, 30.0),
        format!("min eig(C+iJ) = {min_eig:.2e}, min det C = {min_det:.6}, {:.2}s", el.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(3);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = rng.random_range(2..=20);
        let spec = KernelSpec::matern_half(rng.random_range(0.05..1.0), rng.random_range(0.5..2.0)).unwrap();
        let prior = prior_posterior(&spec, n);
        assert_eq!(prior.jitter, 0.0);
        let kobs = rng.random_range(1..=n.min(10));
        let sites = index::sample(&mut rng, n, kobs).into_vec();
        let y = DVector::from_fn(kobs, |_, _| rng.random_range(-2.0..2.0));
        let noise = [0.0, 1e-2, 1.0][i % 3];
        let state = embed_posterior_state(&prior)
            .unwrap()
            .condition(&MeasurementRecord::new(sites.clone(), y.as_slice().to_vec(), noise))
            .unwrap();
        // μ' = K_*O (K_OO + σ²)⁻¹ y,  k' = K - K_*O (K_OO + σ²)⁻¹ K_O*, via an LU inverse.
        let k = &prior.cov;
        let k_oo = DMatrix::from_fn(kobs, kobs, |a, b| k[(sites[a], sites[b])] + if a == b { noise } else { 0.0 });
        let k_so = DMatrix::from_fn(n, kobs, |r, b| k[(r, sites[b])]);
        let inv = k_oo.try_inverse().unwrap();
        let mu = &k_so * &inv * &y;
        let cov = k - &k_so * &inv * k_so.transpose();
        let (m1, c11) = state.born_marginal();
        worst = worst.max((m1 - mu).amax()).max((c11 - cov).amax());
    }
    let el = t.elapsed();
    outcome(worst <= 1e-9 && within(el, 10.0), format!("max φ-sector deviation {worst:.2e} on 50 instances, {:.2}s", el.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(4);
    let n_samples = 10_000;
    let mut worst = 0.0f64;
    let mut all = true;
    for cfg in 0..5u64 {
        let grid = rng.random_range(2..=8);
        let channels = rng.random_range(1..=2);
        let layers = rng.random_range(1..=3);
        let classes = rng.random_range(2..=(channels * grid).min(6));
        let net = ClassicalNet::random(channels, grid, classes, layers, 0.1, cfg % 2 == 1, 0.3, derive_seed(40, cfg));
        let spec = KernelSpec::matern_half(rng.random_range(0.1..0.5), 1.0).unwrap();
        let xs = uniform_grid(grid);
        let obs = phasenet_core::gp::IrregularSeries::new(
            xs.clone(),
            xs.iter().map(|_| rng.random_range(-1.0..1.0)).collect(),
            None,
        )
        .unwrap();
        let post = phasenet_core::gp::gp_posterior(&spec, &obs, 0.05, &xs).unwrap();
        let a = pncnn_forward(&net, &post, n_samples, derive_seed(41, cfg)).unwrap();
        let b = net.to_spnn(n_samples).unwrap().forward(&post, derive_seed(42, cfg)).unwrap();
        for c in 0..classes {
            let se = (a.std_err[c].powi(2) + b.std_err[c].powi(2)).sqrt();
            let z = (a.values[c] - b.values[c]).abs() / se;
            worst = worst.max(z);
            all &= z <= 3.0;
        }
    }
    let el = t.elapsed();
    outcome(all && within(el, 120.0), format!("max |Δlogit| = {worst:.2} combined SE over 5 configs, {:.2}s", el.as_secs_f64()))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(5);
    let h = 1e-6;
    let (mut worst_j, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let beta: f64 = [0.1, 1.0, 2.0][rng.random_range(0..3)];
        let phi = rng.random_range(-5.0..5.0) / beta.min(1.0);
        let pi = rng.random_range(-5.0..5.0);
        let f = |p: f64, q: f64| symplectic_softplus_point(p, q, beta);
        let (a, b) = (f(phi + h, pi), f(phi - h, pi));
        let (c, d) = (f(phi, pi + h), f(phi, pi - h));
        let jac = [[(a.0 - b.0) / (2.0 * h), (c.0 - d.0) / (2.0 * h)], [(a.1 - b.1) / (2.0 * h), (c.1 - d.1) / (2.0 * h)]];
        // For a 2x2 Jacobian, D J Dᵀ = det(D) J.
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        worst_j = worst_j.max((det - 1.0).abs());
        let (p2, q2) = f(phi, pi);
        let h_in = pi * (-beta * phi).exp() / beta;
        let h_out = q2 * (-beta * p2).exp() / beta;
        if h_in != 0.0 {
            worst_h = worst_h.max(((h_out - h_in) / h_in).abs());
        }
    }
    let el = t.elapsed();
    outcome(
        worst_j <= 1e-6 && worst_h <= 1e-12 && within(el, 5.0),
        format!("max |DJDᵀ-J| = {worst_j:.2e}, max relative energy drift {worst_h:.2e}, {:.2}s", el.as_secs_f64()),
    )
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    // Two channels on two sites: eight phase-space coordinates per sample.
    let cfg = NetConfig {
        layers: 2,
        channels: 2,
        grid_size: 2,
        classes: 3,
        n_samples: 16,
        model_kind: ModelKind::Spnn,
        ..NetConfig::default()
    };
    let mut model = Model::init(cfg, 6).unwrap();
    // Move away from the small initial scale so every term is exercised.
    let scaled: Vec<f64> = model.flat_params().iter().map(|p| 5.0 * p).collect();
    model.set_flat_params(&scaled).unwrap();
    let spec = KernelSpec::matern_half(0.4, 1.0).unwrap();
    let xs = uniform_grid(2);
    let posts: Vec<GpPosterior> = [[0.3, -0.8], [1.0, 0.2], [-0.5, -0.1]]
        .iter()
        .map(|v| {
            let s = phasenet_core::gp::IrregularSeries::new(xs.clone(), v.to_vec(), None).unwrap();
            phasenet_core::gp::gp_posterior(&spec, &s, 0.1, &xs).unwrap()
        })
        .collect();
    let refs: Vec<&GpPosterior> = posts.iter().collect();
    let labels = [0, 2, 1];
    let seeds = [7, 8, 9];
    let (_, grad, _) = model.loss_and_grad(&refs, &labels, &seeds).unwrap();
    let p0 = model.flat_params();
    let h = 1e-5;
    let mut fd = vec![0.0; p0.len()];
    let mut probe = model.clone();
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        probe.set_flat_params(&p).unwrap();
        let up = probe.loss(&refs, &labels, &seeds).unwrap();
        p[i] = p0[i] - h;
        probe.set_flat_params(&p).unwrap();
        let down = probe.loss(&refs, &labels, &seeds).unwrap();
        fd[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = diff / norm;
    let el = t.elapsed();
    outcome(
        rel <= 1e-4 && within(el, 30.0),
        format!("relative gradient error {rel:.2e} over {} parameters, {:.2}s", p0.len(), el.as_secs_f64()),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let mut rng = rng::seeded(7);
    let (mut worst_sim, mut worst_bm) = (0.0f64, 0.0f64);
    let mut counts_ok = true;
    for _ in 0..100 {
        let m = rng.random_range(1..=6);
        let s = random_layer(&mut rng, m);
        let xi = DVector::from_fn(2 * m, |_, _| rng.random_range(-1.0..1.0));
        let bm = bloch_messiah(&s).unwrap();
        worst_bm = worst_bm.max((bm.reconstruct() - &s).amax() / s.amax());
        for passive in [&bm.k, &bm.l] {
            let rot = givens_decompose(passive, 1e-8)
                .unwrap()
                .iter()
                .filter(|g| matches!(g, Gate::Rotation2 { .. }) && !g.is_trivial(1e-14))
                .count();
            counts_ok &= rot <= m * (m - 1) / 2;
        }
        let program = compile_linear(&s, &xi).unwrap().program;
        let vacuum = GaussianState::vacuum(PhaseDim::new(m).unwrap());
        let sim = simulate_gaussian(&program, &vacuum).unwrap();
        let direct = vacuum.apply_symplectic(&s).unwrap().displace(&xi).unwrap();
        worst_sim = worst_sim.max((sim.mean() - direct.mean()).amax()).max((sim.cov() - direct.cov()).amax());
    }
    let el = t.elapsed();
    outcome(
        worst_sim <= 1e-6 && worst_bm <= 1e-7 && counts_ok && within(el, 60.0),
        format!(
            "simulation residual {worst_sim:.2e}, Bloch–Messiah residual {worst_bm:.2e}, rotation budget {}, {:.2}s",
            if counts_ok { "met" } else { "exceeded" },
            el.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    for k in 0..=5 {
        for m in 1..=8 {
            ok &= compile_nonlinearity(k, 1.0 / (2 * m) as f64, m, 1.0).unwrap().len() as u64 == gate_count(k, m);
        }
    }
    let mut n = 1u64;
    for l in 0..=10 {
        ok &= order_gate_count(l) == n && n == 3 * 4u64.pow(l as u32) - 2;
        n = 6 + 4 * n;
    }
    let el = t.elapsed();
    outcome(ok && within(el, 5.0), format!("program lengths and N_ℓ closed form {}, {:.2}s", if ok { "agree" } else { "disagree" }, el.as_secs_f64()))
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let xs = linspace(-1.0, 3.0, 401);
    let errs: Vec<Option<f64>> = [1, 2, 4, 8, 16].iter().map(|&m| max_error(3, EpsPolicy::UnitTime, m, &xs)).collect();
    let decreasing = errs.iter().all(Option::is_some) && errs.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
    let el = t.elapsed();
    let shown: Vec<String> = errs.iter().map(|e| e.map_or("domain".into(), |v| format!("{v:.4}"))).collect();
    outcome(
        decreasing && within(el, 10.0),
        format!("max errors for m = 1,2,4,8,16: [{}], {:.2}s", shown.join(", "), el.as_secs_f64()),
    )
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let out = run_sweep(&cfg, |line| eprintln!("    {line}")).unwrap();
    let acc = |model: ModelKind, f: f64| -> Vec<f64> {
        out.cells.iter().filter(|c| c.model == model && c.fraction == f).filter_map(|c| c.accuracy).collect()
    };
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let full_ok = ModelKind::ALL.iter().all(|&k| {
        let v = acc(k, 1.0);
        v.len() == cfg.n_seeds && v.iter().all(|&a| a >= 85.0)
    });
    let (bnn, pnn, spnn) =
        (mean(acc(ModelKind::Bnn, 0.5)), mean(acc(ModelKind::Pnn, 0.5)), mean(acc(ModelKind::Spnn, 0.5)));
    let half_ok = pnn >= bnn - 5.0 && (spnn - pnn).abs() <= 10.0;
    let min_full = ModelKind::ALL.iter().flat_map(|&k| acc(k, 1.0)).fold(f64::INFINITY, f64::min);
    let el = t.elapsed();
    outcome(
        full_ok && half_ok && within(el, 1800.0),
        format!(
            "f=1 min accuracy {min_full:.2}%; f=0.5 means BNN {bnn:.2} PNN {pnn:.2} SPNN {spnn:.2}; {:.0}s",
            el.as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "symplecticity suite", criterion_1),
        (2, "uncertainty preservation", criterion_2),
        (3, "conditioning matches closed-form GP posterior", criterion_3),
        (4, "spnn / classical network duality", criterion_4),
        (5, "symplectic softplus", criterion_5),
        (6, "gradient check", criterion_6),
        (7, "linear compiler round trip", criterion_7),
        (8, "gate-count law", criterion_8),
        (9, "σ-curve convergence", criterion_9),
        (10, "experiment protocol", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let res = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())));
        println!("acceptance {n:>2} {}: {name}: {}", if res.pass { "PASS" } else { "FAIL" }, res.detail);
        if !res.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
