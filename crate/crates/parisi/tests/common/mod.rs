#![allow(dead_code)]

use parisi::Mixture;

pub fn pure(p: u32) -> Mixture {
    Mixture::new(&[p], &[1.0], false).unwrap()
}

pub fn two_spin() -> Mixture {
    Mixture::diagnostic(&[2], &[1.0], false).unwrap()
}

/// `(4, 28, 84)` with the last weight derived.
pub fn three(l1: f64, l2: f64) -> Mixture {
    Mixture::new(&[4, 28, 84], &[l1, l2], true).unwrap()
}

pub fn ex2() -> Mixture {
    three(0.88, 0.1118)
}

pub fn ex3() -> Mixture {
    three(0.86, 0.1253)
}

pub fn ex4() -> Mixture {
    three(0.88, 0.1113)
}

pub fn ex5() -> Mixture {
    three(0.88, 0.1108)
}

/// Composite Simpson rule, used as an independent quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `int_0^1 sqrt(xi'')`, the full-RSB lower bound of the energy. The
/// substitution `t = s^2` removes the square-root singularity at 0.
pub fn sqrt_xi2_integral(spec: &Mixture) -> f64 {
    simpson(|s| 2.0 * s * spec.xi2(s * s).sqrt(), 0.0, 1.0, 20_000)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton on `P_n`.
pub fn legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Gauss-Legendre quadrature of `f` over `[a, b]` split at `breaks`.
pub fn gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], rule: &[(f64, f64)]) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        total += r * rule.iter().map(|&(x, wt)| wt * f(c + r * x)).sum::<f64>();
    }
    total
}
