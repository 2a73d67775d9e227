mod common;

use common::{ex2, ex5, gl, legendre, pure, sqrt_xi2_integral, two_spin};
use parisi::measure::Tolerances;
use parisi::solver::{solve_frsb, solve_rsb};
use parisi::{Block, Mixture, ParisiMeasure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn breaks(m: &ParisiMeasure) -> Vec<f64> {
    m.pieces().iter().map(|p| p.a()).skip(1).collect()
}

/// Piece ends plus cuts graded towards each right end, where a small tail
/// makes `1/tail` nearly singular.
fn graded_breaks(m: &ParisiMeasure) -> Vec<f64> {
    let mut out = Vec::new();
    for p in m.pieces() {
        let (a, b) = (p.a(), p.b());
        out.push(a);
        out.extend((1..48).map(|j| b - (b - a) * 0.5f64.powi(j)));
    }
    out
}

#[test]
fn g_closed_forms_match_double_quadrature() {
    let spec = ex5();
    let m = solve_frsb(&spec, &[1, 1, 1]).unwrap().measure.unwrap();
    let cuts = breaks(&m);
    let rule = legendre(40);
    let tail = |r: f64| m.nu_tail(r).unwrap();
    let gbar = |t: f64| spec.xi1(t) - gl(|r| tail(r).powi(-2), 0.0, t, &cuts, &rule);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let u: f64 = rng.gen_range(0.0..1.0);
        let (gb, g) = m.g_functions(u).unwrap();
        assert!((gb - gbar(u)).abs() < 1e-8, "gbar({u})");
        let direct = gl(gbar, u, 1.0, &cuts, &rule);
        assert!((g - direct).abs() < 1e-8, "g({u}): {g} vs {direct}");
    }
    assert_eq!(m.g(1.0), 0.0);
}

#[test]
fn tail_on_a_segment_is_the_curve() {
    let spec = ex5();
    let m = solve_frsb(&spec, &[1, 1, 1]).unwrap().measure.unwrap();
    for s in m.segments() {
        for i in 0..=20 {
            let x = s.a + (s.b - s.a) * i as f64 / 20.0;
            assert!((m.nu_tail(x).unwrap() - spec.phi_star(x)).abs() < 1e-10);
        }
    }
}

#[test]
fn tail_is_nonincreasing_and_ends_at_delta() {
    let m = solve_frsb(&ex5(), &[1, 1, 1]).unwrap().measure.unwrap();
    let mut last = f64::INFINITY;
    for i in 0..=4000 {
        let v = m.nu_tail(i as f64 / 4000.0).unwrap();
        assert!(v <= last + 1e-15);
        last = v;
    }
    assert_eq!(m.nu_tail(1.0).unwrap(), m.delta());
    // continuity at piece junctions
    for x in breaks(&m) {
        assert!((m.nu_tail(x - 1e-12).unwrap() - m.nu_tail(x).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn replica_symmetric_energy_is_the_rs_bound() {
    for spec in [pure(3), ex2(), two_spin()] {
        let d = spec.xi1(1.0).powf(-0.5);
        let m = ParisiMeasure::replica_symmetric(&spec, d).unwrap();
        assert!((m.cs_energy() - spec.xi1(1.0).sqrt()).abs() < 1e-13);
    }
    let m = ParisiMeasure::replica_symmetric(&two_spin(), 0.5f64.sqrt()).unwrap();
    assert!((m.cs_energy() - 2f64.sqrt()).abs() < 1e-13);
    assert!(m.verify(4096, &Tolerances::default()).passed);
}

#[test]
fn replica_symmetric_pure_three_fails() {
    let spec = pure(3);
    let m = ParisiMeasure::replica_symmetric(&spec, 3f64.powf(-0.5)).unwrap();
    // g(0) = 1 - 3/2
    assert!((m.g(0.0) + 0.5).abs() < 1e-12);
    let v = m.verify(4096, &Tolerances::default());
    assert!(!v.passed);
    assert!((v.min_g + 0.5).abs() < 1e-9 && v.min_g_at == 0.0);
}

#[test]
fn solver_measures_verify_and_perturbed_ones_fail() {
    let spec = ex2();
    let m = solve_rsb(&spec, 3).unwrap().measure.unwrap();
    assert!(m.verify(4096, &Tolerances::default()).passed);
    let bad = ParisiMeasure::new(&spec, &m.blocks(), &m.segments(), m.delta() * 1.01).unwrap();
    let v = bad.verify(4096, &Tolerances::default());
    assert!(!v.passed && v.cond_i_residual.abs() > 1e-8);
}

#[test]
fn json_round_trip_keeps_the_verdict() {
    let m = solve_frsb(&ex5(), &[1, 1, 1]).unwrap().measure.unwrap();
    let text = serde_json::to_string(&m.to_json()).unwrap();
    let back: parisi::MeasureJson = serde_json::from_str(&text).unwrap();
    let back = back.into_measure().unwrap();
    for (a, b) in back.blocks().iter().zip(m.blocks()) {
        assert!((a.a - b.a).abs() < 1e-15 && (a.b - b.b).abs() < 1e-15 && (a.m - b.m).abs() < 1e-14);
    }
    assert!(back.verify(4096, &Tolerances::default()).passed);
}

fn block_measure() -> impl Strategy<Value = (Mixture, ParisiMeasure)> {
    let spec = (prop::collection::btree_set(3u32..=60, 1..=3), prop::collection::vec(0.05f64..1.0, 3)).prop_map(
        |(e, w)| {
            let e: Vec<u32> = e.into_iter().collect();
            let t: f64 = w[..e.len()].iter().sum();
            let w: Vec<f64> = w[..e.len()].iter().map(|v| v / t).collect();
            Mixture::new(&e, &w[..e.len() - 1], true).unwrap()
        },
    );
    let cuts = prop::collection::btree_set(1u32..1000, 0..4);
    let dens = prop::collection::vec(0.0f64..5.0, 4);
    (spec, cuts, dens, 0.01f64..2.0).prop_map(|(spec, cuts, dens, delta)| {
        let mut q: Vec<f64> = vec![0.0];
        q.extend(cuts.into_iter().map(|c| c as f64 / 1000.0));
        q.push(1.0);
        let mut m = 0.0;
        let blocks: Vec<Block> = q
            .windows(2)
            .zip(&dens)
            .map(|(w, d)| {
                m += d;
                Block { a: w[0], b: w[1], m }
            })
            .collect();
        let mu = ParisiMeasure::new(&spec, &blocks, &[], delta).unwrap();
        (spec, mu)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn energy_is_at_least_the_curve_bound((spec, mu) in block_measure()) {
        prop_assert!(mu.cs_energy() >= sqrt_xi2_integral(&spec) - 1e-9);
    }

    #[test]
    fn energy_matches_quadrature((spec, mu) in block_measure()) {
        // (1/2) int_0^1 (xi'' tail + 1/tail) after integrating by parts
        let cuts = graded_breaks(&mu);
        let rule = legendre(40);
        let tail = |t: f64| mu.nu_tail(t).unwrap();
        let e = 0.5 * gl(|t| spec.xi2(t) * tail(t) + 1.0 / tail(t), 0.0, 1.0, &cuts, &rule);
        prop_assert!((mu.cs_energy() - e).abs() < 1e-9 * e);
    }
}
