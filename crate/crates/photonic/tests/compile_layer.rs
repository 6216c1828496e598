//! A trained-style layer survives compilation, serialization and re-parsing.

use nalgebra::{DMatrix, DVector};
use phasenet_core::symplectic::{symplectic_from_generator, BlockGenerator};
use phasenet_photonic::{compile_linear, GateProgram};

#[test]
fn compiled_text_reproduces_the_layer() {
    let m = 5;
    let f = |a: usize, b: usize, s: f64| ((a * 7 + b * 3) as f64 * s).sin() * 0.3;
    let gen = BlockGenerator::new(
        DMatrix::from_fn(m, m, |a, b| f(a, b, 0.9)),
        DMatrix::from_fn(m, m, |a, b| f(a.min(b), a.max(b), 1.3)),
        DMatrix::from_fn(m, m, |a, b| f(a.min(b), a.max(b), 0.4)),
    )
    .unwrap();
    let s = symplectic_from_generator(&gen).unwrap();
    let xi = DVector::from_fn(2 * m, |i, _| i as f64 * 0.1 - 0.4);

    let compiled = compile_linear(&s, &xi).unwrap();
    assert!(compiled.counts.pruned <= compiled.counts.raw);
    let text = compiled.program.to_text();
    let parsed = GateProgram::from_text(&text).unwrap();
    assert_eq!(parsed, compiled.program);

    let (s2, xi2) = parsed.affine_map().unwrap();
    assert!((s2 - &s).amax() < 1e-10);
    assert!((xi2 - &xi).amax() < 1e-10);
}
