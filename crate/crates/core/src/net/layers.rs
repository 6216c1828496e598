//! Pointwise flows, linear maps and structural operators on sample batches.

use nalgebra::{DMatrix, DVector};

use super::sampling::SampleBatch;
use super::NetError;
use crate::symplectic::{direct_sum, matrix_exp, max_abs, LinalgError};

/// `β⁻¹ log(1 + e^{βx})`, split at `βx = 0` so neither branch overflows.
pub fn softplus(x: f64, beta: f64) -> f64 {
    let t = beta * x;
    if t > 0.0 {
        x + (-t).exp().ln_1p() / beta
    } else {
        t.exp().ln_1p() / beta
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

/// Time-one flow of `β⁻¹ π e^{-βφ}`:
/// `(φ, π) ↦ (β⁻¹ log(1 + e^{βφ}), π (1 + e^{-βφ}))`.
pub fn symplectic_softplus_point(phi: f64, pi: f64, beta: f64) -> (f64, f64) {
    let stretch = 1.0 + (-beta * phi).exp();
    (softplus(phi, beta), if pi == 0.0 { 0.0 } else { saturate(pi * stretch) })
}

/// Vector-Jacobian product of [`symplectic_softplus_point`].
pub fn symplectic_softplus_vjp(phi: f64, pi: f64, beta: f64, d_phi_out: f64, d_pi_out: f64) -> (f64, f64) {
    let e = (-beta * phi).exp();
    let d_phi = d_phi_out * sigmoid(beta * phi) + saturate(d_pi_out * (-beta * pi * e));
    let d_pi = saturate(d_pi_out * (1.0 + e));
    (saturate(d_phi), d_pi)
}

pub fn symplectic_softplus(z: &SampleBatch, beta: f64) -> Result<SampleBatch, NetError> {
    if !(beta > 0.0) {
        return Err(NetError::Config(format!("beta must be positive, got {beta}")));
    }
    let m = z.modes();
    let mut out = z.matrix().clone();
    for r in 0..out.nrows() {
        for i in 0..m {
            let (p, q) = symplectic_softplus_point(out[(r, i)], out[(r, m + i)], beta);
            out[(r, i)] = p;
            out[(r, m + i)] = q;
        }
    }
    SampleBatch::new(z.channels(), z.grid(), out)
}

/// Flow for time `t` of the Hamiltonian `π f(φ)`.
///
/// With `F' = 1/f`, positions move as `φ(t) = F⁻¹(F(φ) + t)` and momenta
/// as `π(t) = π f(φ) / f(φ(t))`. `f_inv` returns `None` outside its domain.
pub fn classical_flow<F, G, H>(f: F, big_f: G, big_f_inv: H, t: f64, phi: f64, pi: f64) -> Result<(f64, f64), NetError>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
    H: Fn(f64) -> Option<f64>,
{
    if t == 0.0 {
        return Ok((phi, pi));
    }
    let u = big_f(phi) + t;
    let phi_t = big_f_inv(u).filter(|v| v.is_finite()).ok_or(NetError::Domain { coordinate: 0, value: phi })?;
    let pi_t = pi * f(phi) / f(phi_t);
    if !pi_t.is_finite() {
        return Err(NetError::Domain { coordinate: 0, value: phi });
    }
    Ok((phi_t, pi_t))
}

/// [`classical_flow`] applied to every (φ, π) pair of a batch.
pub fn classical_flow_batch<F, G, H>(f: F, big_f: G, big_f_inv: H, t: f64, z: &SampleBatch) -> Result<SampleBatch, NetError>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
    H: Fn(f64) -> Option<f64>,
{
    let m = z.modes();
    let mut out = z.matrix().clone();
    for r in 0..out.nrows() {
        for i in 0..m {
            let (p, q) = classical_flow(&f, &big_f, &big_f_inv, t, out[(r, i)], out[(r, m + i)])
                .map_err(|e| match e {
                    NetError::Domain { value, .. } => NetError::Domain { coordinate: i, value },
                    other => other,
                })?;
            out[(r, i)] = p;
            out[(r, m + i)] = q;
        }
    }
    SampleBatch::new(z.channels(), z.grid(), out)
}

/// Each sample maps to `S z + ξ`.
pub fn linear_layer(z: &SampleBatch, s: &DMatrix<f64>, xi: &DVector<f64>) -> Result<SampleBatch, NetError> {
    let n = 2 * z.modes();
    if s.shape() != (n, n) || xi.len() != n {
        return Err(NetError::Dimension(format!("layer expects {n}-dimensional phase space")));
    }
    let mut out = z.matrix() * s.transpose();
    for mut row in out.row_iter_mut() {
        row += xi.transpose();
    }
    SampleBatch::new(z.channels(), z.grid(), out)
}

/// `P` replacing the first site by the spatial mean and keeping the rest.
pub fn pooling_matrix(grid: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(grid, grid);
    for j in 0..grid {
        p[(0, j)] = 1.0 / grid as f64;
    }
    p
}

/// `P⁻¹`, recovering the first site as `|X|·mean − Σ_{x>0} φ_x`.
pub fn pooling_inverse(grid: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(grid, grid);
    p[(0, 0)] = grid as f64;
    for j in 1..grid {
        p[(0, j)] = -1.0;
    }
    p
}

fn per_channel(block: &DMatrix<f64>, channels: usize) -> DMatrix<f64> {
    let g = block.nrows();
    let mut out = DMatrix::zeros(channels * g, channels * g);
    for c in 0..channels {
        out.view_mut((c * g, c * g), (g, g)).copy_from(block);
    }
    out
}

/// Pooling on the position sector of every channel.
pub fn position_pooling(channels: usize, grid: usize) -> DMatrix<f64> {
    per_channel(&pooling_matrix(grid), channels)
}

/// Symplectic lift `P ⊕ P⁻ᵀ` of the per-channel pooling.
pub fn phase_pooling(channels: usize, grid: usize) -> DMatrix<f64> {
    let p = position_pooling(channels, grid);
    let p_inv_t = per_channel(&pooling_inverse(grid), channels).transpose();
    direct_sum(&p, &p_inv_t)
}

pub fn pooling(z: &SampleBatch) -> Result<SampleBatch, NetError> {
    let s = phase_pooling(z.channels(), z.grid());
    linear_layer(z, &s, &DVector::zeros(2 * z.modes()))
}

/// Periodic forward difference, `(∂φ)_x = φ_{x+1} − φ_x`.
pub fn forward_difference(grid: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(grid, grid);
    for x in 0..grid {
        d[(x, x)] -= 1.0;
        d[(x, (x + 1) % grid)] += 1.0;
    }
    d
}

/// `exp(Σ_i α_i ∂^i)`, with `alphas[i]` multiplying the `i`-th power.
pub fn make_diff_operator(alphas: &[f64], grid: usize) -> Result<DMatrix<f64>, NetError> {
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(LinalgError::NonFinite.into());
    }
    let d1 = forward_difference(grid);
    let mut power = DMatrix::<f64>::identity(grid, grid);
    let mut gen = DMatrix::zeros(grid, grid);
    for (i, a) in alphas.iter().enumerate() {
        if i > 0 {
            power = &power * &d1;
        }
        gen += &power * *a;
    }
    Ok(matrix_exp(&gen)?)
}

/// `τ` sending site `x` to `x + shift (mod grid)`.
pub fn cyclic_shift(grid: usize, shift: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(grid, grid);
    for x in 0..grid {
        t[((x + shift) % grid, x)] = 1.0;
    }
    t
}

/// `‖S S_g − S_g S‖∞` for `S_g = τ ⊕ τ`, `τ` shifting every channel.
pub fn check_equivariance(s: &DMatrix<f64>, channels: usize, grid: usize, shift: usize) -> Result<f64, NetError> {
    let m = channels * grid;
    if s.shape() != (2 * m, 2 * m) {
        return Err(NetError::Dimension(format!("expected a {0}x{0} matrix", 2 * m)));
    }
    let t = per_channel(&cyclic_shift(grid, shift), channels);
    let sg = direct_sum(&t, &t);
    Ok(max_abs(&(s * &sg - &sg * s)))
}

/// Closest block-circulant matrix: every `grid x grid` channel block is
/// replaced by the average along its wrapped diagonals.
pub fn project_block_circulant(m: &DMatrix<f64>, channels: usize, grid: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut sums = vec![0.0; grid];
    for ca in 0..channels {
        for cb in 0..channels {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for i in 0..grid {
                for j in 0..grid {
                    sums[(j + grid - i) % grid] += m[(ca * grid + i, cb * grid + j)];
                }
            }
            for i in 0..grid {
                for j in 0..grid {
                    out[(ca * grid + i, cb * grid + j)] = sums[(j + grid - i) % grid] / grid as f64;
                }
            }
        }
    }
    out
}

/// Replace each channel segment of `v` by its mean.
pub fn project_channel_constant(v: &DVector<f64>, grid: usize) -> DVector<f64> {
    let mut out = v.clone();
    for seg in 0..v.len() / grid {
        let mean = v.rows(seg * grid, grid).mean();
        out.rows_mut(seg * grid, grid).fill(mean);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{is_symplectic, symplectic_form, symplectic_from_generator, BlockGenerator, PhaseDim};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_examples() {
        let (p, q) = symplectic_softplus_point(0.0, 1.0, 0.1);
        assert_relative_eq!(p, 10.0 * 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(q, 2.0, epsilon = 1e-15);
        let (p, q) = symplectic_softplus_point(100.0, 3.0, 0.1);
        assert_relative_eq!(p, 100.000453989, epsilon = 1e-8);
        assert_relative_eq!(q, 3.0 * (1.0 + (-10f64).exp()), epsilon = 1e-15);
        assert!(softplus(1e6, 1.0).is_finite());
        assert!(softplus(-1e6, 1.0) >= 0.0);
        let (_, q) = symplectic_softplus_point(-1e5, 1.0, 0.1);
        assert!(q.is_finite());
    }

    #[test]
    fn flow_examples() {
        let id = classical_flow(|x| x, |x: f64| x.ln(), |u: f64| Some(u.exp()), 0.0, 1.3, 0.7).unwrap();
        assert_eq!(id, (1.3, 0.7));
        let tr = classical_flow(|_| 1.0, |x| x, |u| Some(u), 0.4, 1.0, 2.0).unwrap();
        assert_eq!(tr, (1.4, 2.0));
        let (p, q) = classical_flow(|x| x, |x: f64| x.ln(), |u: f64| Some(u.exp()), 0.5, 2.0, 3.0).unwrap();
        assert_relative_eq!(p, 2.0 * 0.5f64.exp(), epsilon = 1e-14);
        assert_relative_eq!(q, 3.0 * (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn softplus_is_a_classical_flow() {
        let beta = 0.1;
        let f = |x: f64| (-beta * x).exp() / beta;
        let big_f = |x: f64| (beta * x).exp();
        let big_f_inv = |u: f64| if u > 0.0 { Some(u.ln() / beta) } else { None };
        for &(phi, pi) in &[(0.0, 1.0), (-3.0, 0.5), (4.0, -2.0), (20.0, 1.0)] {
            let (a, b) = classical_flow(f, big_f, big_f_inv, 1.0, phi, pi).unwrap();
            let (c, d) = symplectic_softplus_point(phi, pi, beta);
            assert_relative_eq!(a, c, max_relative = 1e-12);
            assert_relative_eq!(b, d, max_relative = 1e-12);
        }
        // Backwards in time the log argument goes negative.
        let err = classical_flow(f, big_f, big_f_inv, -2.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, NetError::Domain { .. }));
    }

    #[test]
    fn flow_batch_names_the_coordinate() {
        let z = SampleBatch::new(1, 2, DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 0.0, 0.0])).unwrap();
        let err = classical_flow_batch(|x| x, |x: f64| x, |u: f64| (u > 0.0).then_some(u), -1.5, &z).unwrap_err();
        assert_eq!(err, NetError::Domain { coordinate: 0, value: 1.0 });
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let beta = 0.1;
        let h = 1e-6;
        for &(phi, pi) in &[(0.3, 1.2), (-7.0, -0.4), (15.0, 2.0)] {
            let (gp, gq) = symplectic_softplus_vjp(phi, pi, beta, 0.7, -1.1);
            let f = |p: f64, q: f64| {
                let (a, b) = symplectic_softplus_point(p, q, beta);
                0.7 * a - 1.1 * b
            };
            assert_relative_eq!(gp, (f(phi + h, pi) - f(phi - h, pi)) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(gq, (f(phi, pi + h) - f(phi, pi - h)) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn linear_layer_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = SampleBatch::new(1, 2, DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let same = linear_layer(&z, &DMatrix::identity(4, 4), &DVector::zeros(4)).unwrap();
        assert_eq!(same, z);

        // Block-diagonal S: the π outputs ignore the φ inputs.
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5));
        let g = BlockGenerator::new(a, DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)).unwrap();
        let s = symplectic_from_generator(&g).unwrap();
        let mut z2 = z.matrix().clone();
        z2.columns_mut(0, 2).fill(5.0);
        let z2 = SampleBatch::new(1, 2, z2).unwrap();
        let o1 = linear_layer(&z, &s, &DVector::zeros(4)).unwrap();
        let o2 = linear_layer(&z2, &s, &DVector::zeros(4)).unwrap();
        assert_eq!(o1.matrix().columns(2, 2), o2.matrix().columns(2, 2));
    }

    #[test]
    fn pooling_examples() {
        let p = pooling_matrix(2);
        let v = p * DVector::from_vec(vec![3.0, 5.0]);
        assert_eq!(v.as_slice(), &[4.0, 5.0]);
        let back = pooling_inverse(2) * v;
        assert_eq!(back.as_slice(), &[3.0, 5.0]);
        for g in 1..7 {
            assert!(max_abs(&(pooling_matrix(g) * pooling_inverse(g) - DMatrix::identity(g, g))) < 1e-14);
            let s = phase_pooling(2, g);
            assert!(is_symplectic(&s, 1e-10).unwrap().ok);
        }
    }

    #[test]
    fn diff_operator_examples() {
        assert!(max_abs(&(make_diff_operator(&[0.0, 0.0], 5).unwrap() - DMatrix::identity(5, 5))) < 1e-15);
        let e = make_diff_operator(&[0.0, 0.7], 6).unwrap();
        for r in 0..6 {
            assert_relative_eq!(e.row(r).sum(), 1.0, epsilon = 1e-12);
            for c in 0..6 {
                assert_relative_eq!(e[(r, c)], e[((r + 1) % 6, (c + 1) % 6)], epsilon = 1e-12);
            }
        }
        let t = cyclic_shift(6, 1);
        assert!(max_abs(&(&e * &t - &t * &e)) < 1e-10);
        let e2 = make_diff_operator(&[0.1, -0.3, 0.2], 6).unwrap();
        assert!(max_abs(&(&e2 * &t - &t * &e2)) < 1e-10);
    }

    fn circulant_generator(rng: &mut ChaCha8Rng, channels: usize, grid: usize) -> BlockGenerator {
        let m = channels * grid;
        let mut blk = || {
            let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.3..0.3));
            project_block_circulant(&raw, channels, grid)
        };
        BlockGenerator::new(blk(), blk(), blk()).unwrap()
    }

    #[test]
    fn equivariance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ch, g) = (2, 5);
        let s = symplectic_from_generator(&circulant_generator(&mut rng, ch, g)).unwrap();
        for shift in 0..g {
            assert!(check_equivariance(&s, ch, g, shift).unwrap() <= 1e-9);
        }
        assert_eq!(check_equivariance(&DMatrix::identity(20, 20), ch, g, 2).unwrap(), 0.0);

        let m = ch * g;
        let mut blk = || DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.3..0.3));
        let g_rand = BlockGenerator::new(blk(), blk(), blk()).unwrap();
        let s_rand = symplectic_from_generator(&g_rand).unwrap();
        assert!(check_equivariance(&s_rand, ch, g, 1).unwrap() > 1e-3);
    }

    #[test]
    fn circulant_projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let once = project_block_circulant(&raw, 2, 4);
        assert!(max_abs(&(project_block_circulant(&once, 2, 4) - &once)) < 1e-15);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0, 5.0, 8.0]);
        assert_eq!(project_channel_constant(&v, 3).as_slice(), &[2.0, 2.0, 2.0, 6.0, 6.0, 6.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn softplus_is_symplectic_pointwise(phi in -50.0f64..50.0, pi in -5.0f64..5.0) {
            let beta = 0.1;
            let h = 1e-6;
            let (a1, b1) = symplectic_softplus_point(phi + h, pi, beta);
            let (a0, b0) = symplectic_softplus_point(phi - h, pi, beta);
            let (c1, d1) = symplectic_softplus_point(phi, pi + h, beta);
            let (c0, d0) = symplectic_softplus_point(phi, pi - h, beta);
            let jac = DMatrix::from_row_slice(2, 2, &[
                (a1 - a0) / (2.0 * h), (c1 - c0) / (2.0 * h),
                (b1 - b0) / (2.0 * h), (d1 - d0) / (2.0 * h),
            ]);
            let j = symplectic_form(PhaseDim::new(1).unwrap());
            prop_assert!(max_abs(&(&jac * &j * jac.transpose() - &j)) <= 1e-6);
        }

        #[test]
        fn softplus_conserves_its_hamiltonian(phi in -50.0f64..50.0, pi in -5.0f64..5.0) {
            let beta = 0.1;
            let (p, q) = symplectic_softplus_point(phi, pi, beta);
            let before = pi * (-beta * phi).exp() / beta;
            let after = q * (-beta * p).exp() / beta;
            prop_assert!((after - before).abs() <= 1e-12 * before.abs().max(f64::MIN_POSITIVE));
        }
    }
}
