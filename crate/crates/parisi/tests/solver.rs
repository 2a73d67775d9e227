mod common;

use common::{ex2, ex3, ex4, ex5, pure};
use parisi::kernels::{h, r1};
use parisi::measure::Tolerances;
use parisi::solver::{chain_equations, critical_points, rsb_dual_forms, solve_frsb, solve_rsb};
use parisi::ChainKind;

/// `1 + z` solving `h(0, 1, 1 + z) = 0` for pure 3-spin, by plain bisection on
/// `1 + 3 (1/(z-1) - z ln z / (z-1)^2)`.
fn pure_three_root() -> f64 {
    let f = |z: f64| 1.0 + 3.0 * (1.0 / (z - 1.0) - z * z.ln() / ((z - 1.0) * (z - 1.0)));
    let (mut a, mut b) = (2.0, 3.0);
    assert!(f(a) < 0.0 && f(b) > 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m
        } else {
            b = m
        }
    }
    0.5 * (a + b)
}

#[test]
fn pure_three_spin_one_step() {
    let spec = pure(3);
    let sol = solve_rsb(&spec, 1).unwrap();
    assert!((1.0 + sol.zk - pure_three_root()).abs() < 1e-10);
    assert!(sol.cond2_ok && sol.cond3_ok);
    assert!(sol.verification.as_ref().unwrap().passed);
}

#[test]
fn pure_three_spin_has_no_two_step_measure() {
    match solve_rsb(&pure(3), 2) {
        Err(_) => {}
        Ok(sol) => assert!(!sol.verification.is_some_and(|v| v.passed)),
    }
}

#[test]
fn rsb_solution_invariants() {
    for (spec, k) in [(pure(3), 1), (ex2(), 3)] {
        let sol = solve_rsb(&spec, k).unwrap();
        assert!(sol.residuals.iter().all(|r| r.abs() <= 1e-10), "{:?}", sol.residuals);
        assert!(sol.m.windows(2).all(|w| w[0] < w[1]) && sol.m[0] > 0.0);
        assert!(sol.z.iter().all(|&z| z > 0.0));
        let qk1 = sol.q[k - 1];
        let lhs = sol.delta * sol.delta * (1.0 + sol.zk) * (spec.xi1(1.0) - spec.xi1(qk1));
        assert!((lhs - (1.0 - qk1)).abs() < 1e-10);
        let v = sol.measure.as_ref().unwrap().verify(4096, &Tolerances::default());
        assert!(v.passed, "{v:?}");
    }
}

#[test]
fn example_two_knots_near_the_witness() {
    let sol = solve_rsb(&ex2(), 3).unwrap();
    assert!((sol.q[1] - 0.9345).abs() < 1e-3 && (sol.q[2] - 0.975).abs() < 1e-3, "{:?}", sol.q);
}

#[test]
fn parity_duality_at_the_solution() {
    let sol = solve_rsb(&ex2(), 3).unwrap();
    let forms = rsb_dual_forms(&ex2(), &sol.q, 1.0 + sol.zk).unwrap();
    for (l, (a, b)) in forms.iter().enumerate() {
        assert!(a.abs() < 1e-9, "block {}: {a}", l + 1);
        if let Some(b) = b {
            assert!((a - b).abs() < 1e-9, "block {}: {a} vs {b}", l + 1);
        }
    }
}

#[test]
fn block_equations_move_with_the_top_ratio() {
    let spec = ex2();
    let sol = solve_rsb(&spec, 3).unwrap();
    let star = 1.0 + sol.zk;
    let base = chain_equations(&spec, ChainKind::Rsb, &sol.q, Some(star)).unwrap();
    let up = chain_equations(&spec, ChainKind::Rsb, &sol.q, Some(star * (1.0 + 1e-6))).unwrap();
    for l in 1..=3 {
        let d = up[l - 1] - base[l - 1];
        if (3 - l) % 2 == 0 {
            assert!(d > 0.0, "block {l}");
        } else {
            assert!(d < 0.0, "block {l}");
        }
    }
}

#[test]
fn pure_three_spin_critical_point() {
    let spec = pure(3);
    let sol = solve_rsb(&spec, 1).unwrap();
    let xs = critical_points(&spec, &sol.q, 1, 1.0 + sol.zk);
    assert_eq!(xs.len(), 1, "{xs:?}");
    let x = xs[0];
    assert!(x > 0.0 && x < 1.0);
    assert!(h(&spec, x, 1.0, r1(&spec, x, 1.0, 0.0).unwrap()).unwrap() >= 0.0);
    assert!(critical_points(&spec, &sol.q, 1, 1e-9).is_empty());
}

#[test]
fn frsb_examples() {
    let cases = [
        (ex3(), vec![1, 2], vec![(0, 1, 0.929, 0.93), (1, 0, 0.9352, 0.936), (1, 1, 0.9497, 0.94975)]),
        (ex4(), vec![2, 1], vec![(0, 2, 0.97136, 0.97139), (1, 0, 0.9714, 0.9715)]),
        (
            ex5(),
            vec![1, 1, 1],
            vec![(0, 1, 0.9345, 0.935), (1, 0, 0.939, 0.94), (1, 1, 0.959, 0.961), (2, 0, 0.97, 0.972)],
        ),
    ];
    for (spec, comp, brackets) in cases {
        let sol = solve_frsb(&spec, &comp).unwrap();
        for &(j, i, lo, hi) in &brackets {
            let q = sol.block_chains[j][i];
            assert!((lo..=hi).contains(&q), "{comp:?} chain {j} knot {i}: {q}");
        }
        for w in sol.block_chains.windows(2) {
            assert!(w[0].last().unwrap() < w[1].first().unwrap(), "no gap: {:?}", sol.block_chains);
        }
        for (j, &(first, last, _)) in sol.f_values.iter().enumerate() {
            if j > 0 && j + 1 < comp.len() {
                let target = if comp[j] % 2 == 0 { last } else { 1.0 / last };
                assert!((first - target).abs() < 1e-10, "link of chain {j}");
            }
        }
        assert!(sol.cond2_ok && sol.cond4_ok);
        let v = sol.measure.as_ref().unwrap().verify(4096, &Tolerances::default());
        assert!(v.passed, "{comp:?}: {v:?}");
    }
}

#[test]
fn example_three_support() {
    let sol = solve_frsb(&ex3(), &[1, 2]).unwrap();
    let m = sol.measure.unwrap();
    let q22 = sol.block_chains[1][1];
    assert_eq!(m.isolated_support(), vec![0.0, q22, 1.0]);
    assert_eq!(m.segments().len(), 1);
}
