//! Root finding, a small damped Newton solver and Gauss-Legendre quadrature.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Brent's method on a sign-changing bracket.
///
/// Returns `None` when `f(a)` and `f(b)` have the same strict sign or a
/// non-finite value shows up.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return None;
        }
    }
    Some(b)
}

/// Every sign change of `f` on the given increasing grid, refined by Brent.
pub fn all_roots<F: FnMut(f64) -> f64>(mut f: F, grid: &[f64], xtol: f64) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (fa, fb) = (vals[i], vals[i + 1]);
        if !fa.is_finite() || !fb.is_finite() {
            continue;
        }
        if fa == 0.0 {
            if roots.last() != Some(&grid[i]) {
                roots.push(grid[i]);
            }
            continue;
        }
        if fa.signum() != fb.signum() && fb != 0.0 {
            if let Some(r) = brent(&mut f, grid[i], grid[i + 1], xtol) {
                roots.push(r);
            }
        }
    }
    if let (Some(&x), Some(&v)) = (grid.last(), vals.last()) {
        if v == 0.0 && roots.last() != Some(&x) {
            roots.push(x);
        }
    }
    roots
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Settings for [`damped_newton`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    /// Stop once the max-norm of the residual drops below this.
    pub f_tol: f64,
    pub max_iter: usize,
    /// Step halvings allowed per iteration.
    pub max_halvings: usize,
    /// Central difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { f_tol: 1e-12, max_iter: 60, max_halvings: 40, fd_step: 1e-7 }
    }
}

/// Outcome of a Newton run.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

/// Damped Newton with a central-difference Jacobian.
///
/// The residual map may return `None` outside its domain; such trial points
/// are treated like an increase of the residual and the step is halved.
pub fn damped_newton<F>(mut f: F, x0: &[f64], params: NewtonParams) -> NewtonResult
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = match f(&x) {
        Some(v) => v,
        None => {
            return NewtonResult { x, residual: f64::INFINITY, iterations: 0, converged: false }
        }
    };
    let mut res = max_norm(&fx);
    let mut it = 0;
    while it < params.max_iter && res > params.f_tol {
        it += 1;
        let mut jac = vec![vec![0.0; n]; n];
        for k in 0..n {
            let hk = params.fd_step * x[k].abs().max(1e-3);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += hk;
            xm[k] -= hk;
            let (Some(fp), Some(fm)) = (f(&xp), f(&xm)) else {
                return NewtonResult { x, residual: res, iterations: it, converged: false };
            };
            for i in 0..n {
                jac[i][k] = (fp[i] - fm[i]) / (2.0 * hk);
            }
        }
        let Some(step) = solve_dense(jac, fx.iter().map(|v| -v).collect()) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=params.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Some(ft) = f(&trial) {
                let r = max_norm(&ft);
                if r < res {
                    x = trial;
                    fx = ft;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    NewtonResult { x, residual: res, iterations: it, converged: res <= params.f_tol }
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
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
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(n).or_insert_with(|| legendre_nodes(n)).clone()
}

/// Fixed `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = rule(n);
    let c = 0.5 * (b - a);
    let m = 0.5 * (b + a);
    c * x.iter().zip(&w).map(|(&xi, &wi)| wi * f(m + c * xi)).sum::<f64>()
}

/// 64-point Gauss-Legendre on a uniform split of `[a, b]`, doubling the
/// number of panels until two estimates agree to `tol` (absolute and relative).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = |f: &mut F, k: usize| -> f64 {
        let h = (b - a) / k as f64;
        (0..k).map(|i| gauss_legendre(&mut *f, a + i as f64 * h, a + (i + 1) as f64 * h, 64)).sum()
    };
    let mut k = 1;
    let mut prev = panels(&mut f, k);
    while k < 1 << 12 {
        k *= 2;
        let next = panels(&mut f, k);
        if (next - prev).abs() <= tol * (1.0 + next.abs()) {
            return next;
        }
        prev = next;
    }
    prev
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    rule(n)
}
