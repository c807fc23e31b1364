//! Cumulants from the Cauchy integral of `S(z)` on a circle in the complex
//! counting-field plane, checked against the finite-difference values.

use std::f64::consts::PI;

use nalgebra::Matrix5;
use num_complex::Complex64;
use qbat_core::datagen::ParamRanges;
use qbat_core::fcs::cumulants;
use qbat_core::model::{build_generator, idx, BatteryParams, GeneratorVariant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TP: GeneratorVariant = GeneratorVariant::TracePreserving;

fn tilted(l0: &Matrix5<f64>, z: Complex64) -> Matrix5<Complex64> {
    let mut m = l0.map(|x| Complex64::new(x, 0.0));
    m[(idx::RHO_BB, idx::RHO_AA)] *= (-z).exp();
    m[(idx::RHO_AA, idx::RHO_BB)] *= z.exp();
    m
}

fn nearest(l0: &Matrix5<f64>, z: Complex64, prev: Complex64) -> Complex64 {
    let ev = tilted(l0, z).eigenvalues().expect("complex Schur converges");
    *ev.iter()
        .min_by(|a, b| (*a - prev).norm().total_cmp(&(*b - prev).norm()))
        .unwrap()
}

/// `j_n = n! / (2 pi i) ∮ S(z) / z^(n+1) dz` by the trapezoidal rule.
fn contour_cumulants(p: &BatteryParams, radius: f64, nodes: usize) -> [f64; 4] {
    let l0 = build_generator(p, 0.0, TP).unwrap().entries;
    // walk out along the real axis from the stationary eigenvalue
    let mut s = Complex64::new(0.0, 0.0);
    for k in 1..=20 {
        s = nearest(&l0, Complex64::new(radius * k as f64 / 20.0, 0.0), s);
    }
    let mut values = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let z = Complex64::from_polar(radius, 2.0 * PI * k as f64 / nodes as f64);
        s = nearest(&l0, z, s);
        values.push((z, s));
    }
    let mut out = [0.0; 4];
    let mut factorial = 1.0;
    for n in 1..=4 {
        factorial *= n as f64;
        let sum: Complex64 = values.iter().map(|(z, s)| s / z.powi(n as i32)).sum();
        out[n - 1] = factorial * sum.re / nodes as f64;
    }
    out
}

fn check(p: &BatteryParams) {
    let set = cumulants(p, TP).unwrap();
    let oracle = contour_cumulants(p, 0.05, 64);
    // both estimators carry round-off set by the size of S near 0, so the
    // tolerance scales with the largest cumulant rather than each order
    let scale = oracle.iter().fold(1e-12f64, |m, x| m.max(x.abs()));
    for (i, o) in oracle.iter().enumerate() {
        let err = (set.j[i] - o).abs();
        assert!(err < 1e-6 * scale, "order {}: stencil {} vs contour {o}", i + 1, set.j[i]);
    }
}

#[test]
fn reference_cumulants_match_contour_integral() {
    check(&BatteryParams::reference_enhanced());
    check(&BatteryParams::reference_suppressed());
    check(&BatteryParams::reference_enhanced().without_coherence());
}

#[test]
fn random_stable_cumulants_match_contour_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ranges = ParamRanges::default();
    let mut checked = 0;
    while checked < 20 {
        let p = ranges.draw(&mut rng, 1.0, 1.0);
        let l0 = build_generator(&p, 0.0, TP).unwrap().entries;
        // the contour must stay inside the disc where S is analytic, which a
        // well-separated stationary eigenvalue guarantees for radius 0.05
        let gap = l0
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .filter(|&r| r > 1e-9)
            .fold(f64::INFINITY, f64::min);
        let stable = l0.complex_eigenvalues().iter().all(|z| z.re < 1e-9);
        if gap < 0.5 || !stable || !cumulants(&p, TP).unwrap().all_valid() {
            continue;
        }
        check(&p);
        checked += 1;
    }
}
