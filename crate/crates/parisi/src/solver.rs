//! Block systems of the k-RSB and k-FRSB structures and measure assembly.
//!
//! A Parisi measure is a sequence of chains of constant-density blocks, with
//! full-RSB segments between consecutive chains. On a segment the tail equals
//! `xi''^(-1/2)`, so the chains decouple and each one is a small system in its
//! own knots:
//!
//! * `Rsb`: pinned at 0 and 1, the whole measure.
//! * `First`: starts at 0, ends where the first segment begins.
//! * `Interior`: both ends touch a segment.
//! * `Last`: starts at a segment, ends at 1.
//!
//! Each system is solved by shooting in one parameter. The tail at the top
//! knot is known (or follows from the top block), every block equation
//! `h(y, x, tail(y)/tail(x)) = 0` is solved downward for the next knot, and
//! the bottom condition is the scalar residual. Sign changes of that residual
//! are refined by Brent and the result is polished by damped Newton on the
//! chain-functional form of the equations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{bold_r, bracket, chain_profile, dratio, h_ext, r1, r2, Chain, KernelProfile};
use crate::measure::{Block, ParisiMeasure, Segment, Tolerances, VerificationReport};
use crate::numerics::{all_roots, brent, damped_newton, NewtonParams};
use crate::Mixture;

/// Role of a chain inside the measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainKind {
    Rsb,
    First,
    Interior,
    Last,
}

/// Solver settings.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Uniform points of the shooting-parameter scan (a geometric cluster
    /// towards 1 is added).
    pub scan_points: usize,
    /// Uniform points of the downward knot search.
    pub descent_points: usize,
    pub newton: NewtonParams,
    /// Relative slack on the chain inequalities `Y <= * <= 1/Z`.
    pub cond_tol: f64,
    /// Knots closer than this count as merged.
    pub collapse: f64,
    /// Grid of the optimality check run on every assembled measure.
    pub verify_grid: usize,
    pub tolerances: Tolerances,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scan_points: 400,
            descent_points: 400,
            newton: NewtonParams::default(),
            cond_tol: 1e-9,
            collapse: 1e-7,
            verify_grid: 4096,
            tolerances: Tolerances::default(),
        }
    }
}

/// One solution of a chain system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSolution {
    pub kind: ChainKind,
    /// `x_0 < ... < x_s`.
    pub knots: Vec<f64>,
    /// Tail of the measure at each knot.
    pub tails: Vec<f64>,
    /// Ratio `tail(x_{s-1}) / tail(x_s)` of the top block.
    pub star: f64,
    /// Residuals of the block equations in chain-functional form, followed by
    /// the linking equation for interior chains.
    pub residuals: Vec<f64>,
}

impl ChainSolution {
    pub fn s(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Block densities `m_l = (tail_{l-1} - tail_l) / (x_l - x_{l-1})`.
    pub fn densities(&self) -> Vec<f64> {
        (1..self.knots.len())
            .map(|l| (self.tails[l - 1] - self.tails[l]) / (self.knots[l] - self.knots[l - 1]))
            .collect()
    }

    pub fn chain(&self) -> Chain<f64> {
        Chain::new(self.knots.clone()).expect("solver knots are ordered")
    }

    pub fn profile(&self, spec: &Mixture) -> Option<KernelProfile<f64>> {
        if self.s() == 0 {
            return None;
        }
        chain_profile(spec, &self.chain()).ok()
    }

    /// `Y <= * <= 1/Z` up to relative slack `tol`.
    pub fn cond2(&self, spec: &Mixture, tol: f64) -> bool {
        match self.profile(spec) {
            None => true,
            Some(p) => {
                let lower = p.y <= self.star * (1.0 + tol);
                let upper = p.z * self.star <= 1.0 + tol;
                lower && upper
            }
        }
    }
}

/// Inverts the bracket of `h`, which increases from -1 at `z = 0` to 0 at
/// `z = inf`.
fn invert_bracket(beta: f64) -> Option<f64> {
    if !(beta > -1.0 && beta < 0.0) {
        return None;
    }
    let f = |t: f64| bracket(t.exp()) - beta;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -700.0 {
            return None;
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 700.0 {
            return None;
        }
    }
    brent(f, lo, hi, 1e-15).map(f64::exp)
}

/// The unique `z` with `h(x, y, z) = 0`, when it exists.
pub fn h_root(spec: &Mixture, x: f64, y: f64) -> Option<f64> {
    let a = spec.bregman(x, y);
    let s = spec.slope_gap(x, y) * (y - x);
    if s == 0.0 {
        return None;
    }
    invert_bracket(-a / s)
}

#[derive(Debug, Clone)]
struct Shot {
    path: Vec<usize>,
    residual: f64,
    knots: Vec<f64>,
}

/// Terminal condition at the bottom of a chain.
#[derive(Clone, Copy, PartialEq)]
enum Bottom {
    /// The lowest block must start at 0.
    Zero,
    /// The tail must meet `xi''^(-1/2)` at the lowest knot.
    Curve,
}

/// Smallest relative gap `(x - y) / x` searched below a knot. Closer knots
/// are not resolvable against rounding in `h`, and chains with a gap near this
/// floor are degenerate copies of a full-RSB segment.
const DESCENT_FLOOR: f64 = 1e-5;

/// Chain-system solver for one mixture, caching solutions per `(kind, s)`.
#[derive(Debug, Clone)]
pub struct Solver {
    spec: Mixture,
    opts: SolverOptions,
    cache: HashMap<(ChainKind, usize), Vec<ChainSolution>>,
    descent_t: Vec<f64>,
}

impl Solver {
    pub fn new(spec: &Mixture, opts: SolverOptions) -> Self {
        let lo = DESCENT_FLOOR.log10();
        let mut t: Vec<f64> = (0..30).map(|k| 10f64.powf(lo + (-2.0 - lo) * k as f64 / 30.0)).collect();
        let n = opts.descent_points.max(16);
        t.extend((0..=n).map(|k| 1e-2 + (1.0 - 1e-2 - 1e-9) * k as f64 / n as f64));
        Self { spec: spec.clone(), opts, cache: HashMap::new(), descent_t: t }
    }

    pub fn spec(&self) -> &Mixture {
        &self.spec
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Knots `y < x` that close a block ending at `x` with tail `phi`,
    /// nearest first, paired with the tail at `y`.
    fn descend(&self, x: f64, phi: f64) -> Vec<(f64, f64)> {
        let spec = &self.spec;
        let p2 = phi * phi;
        let g = |y: f64| h_ext(spec, y, x, dratio(spec, y, x) / p2);
        let mut ys: Vec<f64> = self.descent_t.iter().rev().map(|t| x * (1.0 - t)).collect();
        ys.dedup();
        let scaled = |y: f64| {
            let d = x - y;
            g(y) / (d * d)
        };
        let mut roots = all_roots(scaled, &ys, 1e-16);
        roots.retain(|&y| y > 0.0 && y < x);
        roots.reverse();
        roots.into_iter().map(|y| (y, dratio(spec, y, x) / phi)).collect()
    }

    /// Knots `y < x` where the tail `D(y, x) / phi` of a block ending at `x`
    /// lands on `xi''(y)^(-1/2)`, nearest first.
    fn curve_knots(&self, x: f64, phi: f64) -> Vec<f64> {
        let spec = &self.spec;
        let f = |y: f64| (spec.phi_star(y) * phi / dratio(spec, y, x)).ln();
        let ys: Vec<f64> = self.descent_t.iter().rev().map(|t| x * (1.0 - t)).collect();
        let mut roots = all_roots(f, &ys, 1e-16);
        roots.retain(|&y| y > 0.0 && y < x);
        roots.reverse();
        roots
    }

    fn shoot(&self, kind: ChainKind, s: usize, u: f64) -> Vec<Shot> {
        let spec = &self.spec;
        let (knots, tails, steps, bottom) = match kind {
            ChainKind::Rsb | ChainKind::Last => {
                let Some(rho) = h_root(spec, u, 1.0) else { return vec![] };
                let delta = (dratio(spec, u, 1.0) / rho).sqrt();
                let steps = if kind == ChainKind::Rsb { s - 2 } else { s - 1 };
                let bottom = if kind == ChainKind::Rsb { Bottom::Zero } else { Bottom::Curve };
                (vec![1.0, u], vec![delta, rho * delta], steps, bottom)
            }
            ChainKind::First => (vec![u], vec![spec.phi_star(u)], s - 1, Bottom::Zero),
            ChainKind::Interior => (vec![u], vec![spec.phi_star(u)], s, Bottom::Curve),
        };
        let mut out = Vec::new();
        self.shoot_rec(knots, tails, Vec::new(), steps, bottom, &mut out);
        out
    }

    fn shoot_rec(
        &self,
        knots: Vec<f64>,
        tails: Vec<f64>,
        path: Vec<usize>,
        steps: usize,
        bottom: Bottom,
        out: &mut Vec<Shot>,
    ) {
        let spec = &self.spec;
        let x = *knots.last().unwrap();
        let phi = *tails.last().unwrap();
        if steps == 0 {
            let mut knots = knots;
            let residual = match bottom {
                Bottom::Zero => {
                    knots.push(0.0);
                    h_ext(spec, 0.0, x, dratio(spec, 0.0, x) / (phi * phi))
                }
                Bottom::Curve => phi * spec.xi2(x).sqrt() - 1.0,
            };
            if residual.is_finite() {
                knots.reverse();
                out.push(Shot { path, residual, knots });
            }
            return;
        }
        if steps == 1 && bottom == Bottom::Curve {
            // The lowest block meets the curve tangentially, so the block
            // equation alone would only touch zero. Place the knot by the tail
            // identity instead and keep the block equation as the residual.
            for (i, y) in self.curve_knots(x, phi).into_iter().enumerate() {
                let d = x - y;
                let residual = h_ext(spec, y, x, spec.phi_star(y) / phi) / (d * d);
                if residual.is_finite() {
                    let mut k = knots.clone();
                    let mut p = path.clone();
                    k.push(y);
                    k.reverse();
                    p.push(i);
                    out.push(Shot { path: p, residual, knots: k });
                }
            }
            return;
        }
        for (i, (y, py)) in self.descend(x, phi).into_iter().enumerate() {
            let mut k = knots.clone();
            let mut t = tails.clone();
            let mut p = path.clone();
            k.push(y);
            t.push(py);
            p.push(i);
            self.shoot_rec(k, t, p, steps - 1, bottom, out);
        }
    }

    fn scan_grid(&self) -> Vec<f64> {
        let n = self.opts.scan_points.max(16);
        let mut u: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
        u.extend((10..=80).map(|j| 1.0 - 10f64.powf(-(j as f64) / 10.0)));
        u.sort_by(f64::total_cmp);
        u.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        u
    }

    /// All solutions of the `(kind, s)` chain system, sorted by top knot.
    pub fn chains(&mut self, kind: ChainKind, s: usize) -> Vec<ChainSolution> {
        if let Some(v) = self.cache.get(&(kind, s)) {
            return v.clone();
        }
        let v = self.compute_chains(kind, s);
        self.cache.insert((kind, s), v.clone());
        v
    }

    fn compute_chains(&self, kind: ChainKind, s: usize) -> Vec<ChainSolution> {
        let spec = &self.spec;
        match (kind, s) {
            (ChainKind::Last, 0) => {
                let d = spec.phi_star(1.0);
                return vec![ChainSolution {
                    kind,
                    knots: vec![1.0],
                    tails: vec![d],
                    star: 1.0,
                    residuals: vec![],
                }];
            }
            (_, 0) => return vec![],
            (ChainKind::Rsb, 1) => {
                let shot = Shot { path: vec![], residual: 0.0, knots: vec![0.0, 1.0] };
                return self.finish(kind, vec![shot]);
            }
            _ => {}
        }
        let grid = self.scan_grid();
        let shots: Vec<Vec<Shot>> = grid.iter().map(|&u| self.shoot(kind, s, u)).collect();
        let mut found = Vec::new();
        for i in 0..grid.len() - 1 {
            self.scan_interval(kind, s, (grid[i], &shots[i]), (grid[i + 1], &shots[i + 1]), 0, &mut found);
        }
        self.finish(kind, found)
    }

    /// Pairs branches across `[a, b]` by descent path, bisecting while the
    /// branch structure differs between the ends (a pair of knots is born or
    /// dies inside the interval).
    fn scan_interval(
        &self,
        kind: ChainKind,
        s: usize,
        (a, sa): (f64, &[Shot]),
        (b, sb): (f64, &[Shot]),
        depth: usize,
        found: &mut Vec<Shot>,
    ) {
        let same = sa.len() == sb.len() && sa.iter().zip(sb).all(|(x, y)| x.path == y.path);
        if !same && depth < 40 {
            let m = 0.5 * (a + b);
            let sm = self.shoot(kind, s, m);
            self.scan_interval(kind, s, (a, sa), (m, &sm), depth + 1, found);
            self.scan_interval(kind, s, (m, &sm), (b, sb), depth + 1, found);
            return;
        }
        for x in sa {
            let Some(y) = sb.iter().find(|y| y.path == x.path) else { continue };
            if x.residual.signum() == y.residual.signum() && x.residual != 0.0 {
                continue;
            }
            let path = x.path.clone();
            let f = |u: f64| {
                self.shoot(kind, s, u)
                    .into_iter()
                    .find(|sh| sh.path == path)
                    .map_or(f64::NAN, |sh| sh.residual)
            };
            let Some(u) = brent(f, a, b, 1e-16) else { continue };
            let Some(shot) = self.shoot(kind, s, u).into_iter().find(|sh| sh.path == path) else {
                continue;
            };
            let scale = x.residual.abs().max(y.residual.abs());
            if shot.residual.abs() <= 1e-6 * scale {
                found.push(shot);
            }
        }
    }

    /// Polishes raw shots, drops collapsed or duplicate chains.
    fn finish(&self, kind: ChainKind, shots: Vec<Shot>) -> Vec<ChainSolution> {
        let mut out: Vec<ChainSolution> = Vec::new();
        for shot in shots {
            let Some(sol) = self.polish(kind, shot.knots) else { continue };
            if sol
                .knots
                .windows(2)
                .any(|w| w[1] - w[0] < self.opts.collapse.max(2.0 * DESCENT_FLOOR * w[1]))
            {
                continue;
            }
            if out.iter().any(|o| {
                o.knots.len() == sol.knots.len()
                    && o.knots.iter().zip(&sol.knots).all(|(a, b)| (a - b).abs() < 1e-9)
            }) {
                continue;
            }
            out.push(sol);
        }
        out.sort_by(|a, b| a.knots.last().unwrap().total_cmp(b.knots.last().unwrap()));
        out
    }

    /// Unknowns of the polish step for a chain.
    fn free_slots(kind: ChainKind, s: usize) -> std::ops::Range<usize> {
        match kind {
            ChainKind::Rsb => 1..s,
            ChainKind::First => 1..s + 1,
            ChainKind::Interior => 0..s + 1,
            ChainKind::Last => 0..s,
        }
    }

    /// Damped Newton on the chain-functional equations, then tails from the
    /// knots.
    fn polish(&self, kind: ChainKind, knots: Vec<f64>) -> Option<ChainSolution> {
        let s = knots.len() - 1;
        let slots = Self::free_slots(kind, s);
        let rsb_star = |k: &[f64]| -> Option<f64> { h_root(&self.spec, k[s - 1], 1.0) };
        let mut x0: Vec<f64> = knots[slots.clone()].to_vec();
        // RSB carries the top ratio as an explicit unknown
        if kind == ChainKind::Rsb {
            x0.push(rsb_star(&knots)?);
        }
        let assemble = |v: &[f64]| -> Vec<f64> {
            let mut k = knots.clone();
            for (slot, val) in slots.clone().zip(v) {
                k[slot] = *val;
            }
            k
        };
        let residual_map = |v: &[f64]| -> Option<Vec<f64>> {
            let k = assemble(v);
            if k.windows(2).any(|w| !(w[1] > w[0])) || k[0] < 0.0 || k[s] > 1.0 {
                return None;
            }
            let star = if kind == ChainKind::Rsb { Some(v[v.len() - 1]) } else { None };
            chain_equations(&self.spec, kind, &k, star)
        };
        let before = residual_map(&x0)?;
        let before_norm = before.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let result = damped_newton(residual_map, &x0, self.opts.newton);
        let v = if result.residual <= before_norm { result.x } else { x0 };
        let k = assemble(&v);
        let residuals = residual_map(&v)?;
        let tails = self.tails_for(kind, &k)?;
        let star = if s >= 1 { tails[s - 1] / tails[s] } else { 1.0 };
        Some(ChainSolution { kind, knots: k, tails, star, residuals })
    }

    /// Tails implied by the knots, walking from the end where they are pinned.
    fn tails_for(&self, kind: ChainKind, k: &[f64]) -> Option<Vec<f64>> {
        let spec = &self.spec;
        let s = k.len() - 1;
        let mut t = vec![0.0; s + 1];
        match kind {
            ChainKind::Rsb | ChainKind::Last if kind == ChainKind::Rsb => {
                let rho = h_root(spec, k[s - 1], 1.0)?;
                t[s] = (dratio(spec, k[s - 1], 1.0) / rho).sqrt();
                for l in (1..=s).rev() {
                    t[l - 1] = dratio(spec, k[l - 1], k[l]) / t[l];
                }
            }
            ChainKind::First | ChainKind::Interior => {
                t[s] = spec.phi_star(k[s]);
                for l in (1..=s).rev() {
                    t[l - 1] = dratio(spec, k[l - 1], k[l]) / t[l];
                }
            }
            _ => {
                t[0] = spec.phi_star(k[0]);
                for l in 1..=s {
                    t[l] = dratio(spec, k[l - 1], k[l]) / t[l - 1];
                }
            }
        }
        t.iter().all(|v| v.is_finite() && *v > 0.0).then_some(t)
    }
}

/// Block equations of a chain in chain-functional form.
///
/// For block `l` the residual is `h(x_{l-1}, x_l, r2(x_{l-1}, x_l) *^e / F_l)`
/// with `e = (-1)^(s-l)`. The top ratio `*` is `1 + z_k` for a full RSB chain
/// (passed in), `F_s` for first and interior chains and `F_0^((-1)^s)` for
/// the last chain. Interior chains add `F_0 - F_s^((-1)^s)`.
pub fn chain_equations(
    spec: &Mixture,
    kind: ChainKind,
    knots: &[f64],
    star: Option<f64>,
) -> Option<Vec<f64>> {
    let s = knots.len() - 1;
    let chain = Chain::new(knots.to_vec()).ok()?;
    let p = chain_profile(spec, &chain).ok()?;
    let star = match kind {
        ChainKind::Rsb => star?,
        ChainKind::First | ChainKind::Interior => p.f[s],
        ChainKind::Last => {
            if s.is_multiple_of(2) {
                p.f[0]
            } else {
                p.f[0].recip()
            }
        }
    };
    let mut res = Vec::with_capacity(s + 1);
    for l in 1..=s {
        let e = if (s - l).is_multiple_of(2) { star } else { star.recip() };
        let z = r2(spec, knots[l - 1], knots[l]) * e / p.f[l];
        res.push(h_ext(spec, knots[l - 1], knots[l], z));
    }
    if kind == ChainKind::Interior {
        let target = if s.is_multiple_of(2) { p.f[s] } else { p.f[s].recip() };
        res.push(p.f[0] - target);
    }
    res.iter().all(|r| r.is_finite()).then_some(res)
}

/// Both forms of every RSB block equation: the `F_l` form and the
/// `F_{l-1}` form. Blocks starting at 0 only have the first.
pub fn rsb_dual_forms(spec: &Mixture, q: &[f64], star: f64) -> Option<Vec<(f64, Option<f64>)>> {
    let k = q.len() - 1;
    let p = chain_profile(spec, &Chain::new(q.to_vec()).ok()?).ok()?;
    let mut out = Vec::new();
    for l in 1..=k {
        let e = if (k - l).is_multiple_of(2) { star } else { star.recip() };
        let fl = h_ext(spec, q[l - 1], q[l], r2(spec, q[l - 1], q[l]) * e / p.f[l]);
        let r = r2(spec, q[l], q[l - 1]);
        let fprev = (r > 0.0).then(|| h_ext(spec, q[l - 1], q[l], p.f[l - 1] * e / r));
        out.push((fl, fprev));
    }
    Some(out)
}

/// Critical points of `g` inside block `l` of an RSB chain `q`.
///
/// They solve `level = R(x) P` where, for `k - l` even,
/// `R(x) = D(q_{l-1}, x) / D(x, q_l)` and `P = prod r_{l+1+2i} / r_{l+2i}`;
/// for `k - l` odd, `R(x) = D(x, q_l) / D(q_{l-1}, x)` and
/// `P = r_l prod_{i>=1} r_{l+2i} / r_{l-1+2i}`. `level` is `1 + z_k`. At most
/// two roots are expected; more are returned as found.
pub fn critical_points(spec: &Mixture, q: &[f64], l: usize, level: f64) -> Vec<f64> {
    let k = q.len() - 1;
    if l == 0 || l > k {
        return vec![];
    }
    let (a, b) = (q[l - 1], q[l]);
    let even = (k - l).is_multiple_of(2);
    let mut prod = 1.0;
    if even {
        let mut i = 0;
        while l + 2 * i + 2 <= k {
            prod *= bold_r(spec, q, l + 1 + 2 * i) / bold_r(spec, q, l + 2 * i);
            i += 1;
        }
    } else {
        prod = bold_r(spec, q, l);
        let mut i = 1;
        while l + 2 * i < k {
            prod *= bold_r(spec, q, l + 2 * i) / bold_r(spec, q, l - 1 + 2 * i);
            i += 1;
        }
    }
    let f = |x: f64| {
        let ratio = dratio(spec, a, x) / dratio(spec, x, b);
        let ratio = if even { ratio } else { ratio.recip() };
        (ratio * prod).ln() - level.ln()
    };
    let n = 2048;
    let grid: Vec<f64> = (1..n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    all_roots(f, &grid, 1e-15)
}

/// `h(x, q_l, r1(x, q_l, q_{l-1}))`, the value of `g` at a critical point
/// inside block `l`.
pub fn critical_value(spec: &Mixture, x: f64, lo: f64, hi: f64) -> f64 {
    match r1(spec, x, hi, lo) {
        Ok(z) => h_ext(spec, x, hi, z),
        Err(_) => f64::NAN,
    }
}

/// Whether `xi''^(-1/2)` is concave on `[a, b]`, checked at 65 points.
pub fn segment_admissible(spec: &Mixture, a: f64, b: f64) -> bool {
    (0..=64).all(|i| {
        let x = a + (b - a) * i as f64 / 64.0;
        let num = spec.curvature_numerator(x);
        num <= 1e-12 * (spec.d(x, 3).powi(2) + 1.0)
    })
}

/// Outcome of the RSB solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsbSolution {
    /// `0 = q_0 < ... < q_k = 1`.
    pub q: Vec<f64>,
    pub zk: f64,
    /// `z_1, ..., z_k`.
    pub z: Vec<f64>,
    pub delta: f64,
    pub m: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cond2_ok: bool,
    pub cond3_ok: bool,
    #[serde(skip)]
    pub measure: Option<ParisiMeasure>,
    pub verification: Option<VerificationReport>,
}

/// Outcome of the FRSB solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrsbSolution {
    pub composition: Vec<usize>,
    pub block_chains: Vec<Vec<f64>>,
    /// Per chain: `F` at the first knot, `F` at the last knot and `*`.
    pub f_values: Vec<(f64, f64, f64)>,
    pub residuals: Vec<f64>,
    pub cond2_ok: bool,
    pub cond3_ok: bool,
    pub cond4_ok: bool,
    #[serde(skip)]
    pub measure: Option<ParisiMeasure>,
    pub verification: Option<VerificationReport>,
}

impl Solver {
    /// Condition (3): `g` stays nonnegative at its critical points inside each block.
    fn blocks_ok(&self, knots: &[f64], measure: &ParisiMeasure) -> bool {
        for l in 1..knots.len() {
            let (a, b) = (knots[l - 1], knots[l]);
            let grid: Vec<f64> = (1..512).map(|i| a + (b - a) * i as f64 / 512.0).collect();
            let gbar = |x: f64| measure.g_functions(x).map(|v| v.0).unwrap_or(f64::NAN);
            for x in all_roots(gbar, &grid, 1e-15) {
                if critical_value(&self.spec, x, a, b) < -self.opts.tolerances.min_g {
                    return false;
                }
            }
        }
        true
    }

    /// Every verified-or-not RSB candidate with `k` atoms.
    pub fn rsb_candidates(&mut self, k: usize) -> Vec<RsbSolution> {
        let chains = self.chains(ChainKind::Rsb, k);
        let n = self.spec.n();
        let mut out = Vec::new();
        for c in chains {
            let q = c.knots.clone();
            let delta = c.tails[k];
            let z: Vec<f64> = (1..=k).map(|l| (c.tails[l - 1] - c.tails[l]) / delta).collect();
            let m = c.densities();
            let cond2_ok = c.cond2(&self.spec, self.opts.cond_tol);
            let blocks: Vec<Block> =
                (1..=k).map(|l| Block { a: q[l - 1], b: q[l], m: m[l - 1] }).collect();
            let measure = ParisiMeasure::new(&self.spec, &blocks, &[], delta).ok();
            let cond3_ok = if k == n {
                true
            } else {
                let level = c.star;
                let mut ok = true;
                for l in 1..=k {
                    for x in critical_points(&self.spec, &q, l, level) {
                        if critical_value(&self.spec, x, q[l - 1], q[l])
                            < -self.opts.tolerances.min_g
                        {
                            ok = false;
                        }
                    }
                }
                ok
            };
            let verification = measure
                .as_ref()
                .map(|mu| mu.verify(self.opts.verify_grid, &self.opts.tolerances));
            out.push(RsbSolution {
                q,
                zk: c.star - 1.0,
                z,
                delta,
                m,
                residuals: c.residuals.clone(),
                cond2_ok,
                cond3_ok,
                measure,
                verification,
            });
        }
        out
    }

    /// Solves the `k`-RSB system and keeps the candidate meeting every condition.
    pub fn solve_rsb(&mut self, k: usize) -> Result<RsbSolution> {
        if k == 0 || k > self.spec.n() {
            return Err(Error::NoSolution { reason: format!("k = {k} outside 1..=n") });
        }
        let cands = self.rsb_candidates(k);
        if cands.is_empty() {
            return Err(Error::NoSolution { reason: format!("{k}-RSB system has no root") });
        }
        let mut good: Vec<RsbSolution> = Vec::new();
        let mut reasons = Vec::new();
        for c in cands {
            let monotone = c.m.windows(2).all(|w| w[0] < w[1]) && c.m[0] > 0.0;
            let verified = c.verification.is_some_and(|v| v.passed);
            if c.cond2_ok && c.cond3_ok && monotone && verified {
                good.push(c);
            } else {
                reasons.push(format!(
                    "q={:?}: cond2={} cond3={} monotone={} verified={}",
                    c.q, c.cond2_ok, c.cond3_ok, monotone, verified
                ));
                if !monotone && c.cond2_ok && c.cond3_ok {
                    continue;
                }
            }
        }
        match good.len() {
            0 => Err(Error::NoSolution { reason: reasons.join("; ") }),
            1 => Ok(good.pop().unwrap()),
            _ => Err(Error::AmbiguousPhase {
                labels: good.iter().map(|g| format!("{:?}", g.q)).collect::<Vec<_>>().join(", "),
            }),
        }
    }

    /// Solves the chains of a composition `(s_1, ..., s_t)`, `t >= 2`.
    ///
    /// The last entry may be 0, meaning the final segment runs up to 1.
    pub fn solve_frsb(&mut self, composition: &[usize]) -> Result<FrsbSolution> {
        let cands = self.frsb_candidates(composition)?;
        let mut good: Vec<FrsbSolution> = Vec::new();
        let mut reasons = Vec::new();
        for c in cands {
            let verified = c.verification.is_some_and(|v| v.passed);
            if c.cond2_ok && c.cond3_ok && c.cond4_ok && verified {
                good.push(c);
            } else {
                reasons.push(format!(
                    "{:?}: cond2={} cond3={} cond4={} verified={}",
                    c.block_chains, c.cond2_ok, c.cond3_ok, c.cond4_ok, verified
                ));
            }
        }
        match good.len() {
            0 => Err(Error::NoSolution { reason: reasons.join("; ") }),
            1 => Ok(good.pop().unwrap()),
            _ => Err(Error::AmbiguousPhase {
                labels: good
                    .iter()
                    .map(|g| format!("{:?}", g.block_chains))
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }

    /// Every ordered combination of chain solutions for a composition, with
    /// its conditions evaluated.
    pub fn frsb_candidates(&mut self, composition: &[usize]) -> Result<Vec<FrsbSolution>> {
        let t = composition.len();
        let k: usize = composition.iter().sum();
        if t < 2 || k == 0 || k > self.spec.n() {
            return Err(Error::NoSolution { reason: format!("bad composition {composition:?}") });
        }
        if composition[..t - 1].contains(&0) {
            return Err(Error::NoSolution { reason: "only the last entry may be 0".into() });
        }
        let mut per_chain: Vec<Vec<ChainSolution>> = Vec::with_capacity(t);
        for (j, &s) in composition.iter().enumerate() {
            let kind = if j == 0 {
                ChainKind::First
            } else if j + 1 == t {
                ChainKind::Last
            } else {
                ChainKind::Interior
            };
            let sols = self.chains(kind, s);
            if sols.is_empty() {
                return Ok(vec![]);
            }
            per_chain.push(sols);
        }
        let mut combos: Vec<Vec<ChainSolution>> = vec![vec![]];
        for sols in &per_chain {
            let mut next = Vec::new();
            for prefix in &combos {
                for sol in sols {
                    if let Some(prev) = prefix.last() {
                        let top = *prev.knots.last().unwrap();
                        if !(sol.knots[0] - top > self.opts.collapse) {
                            continue;
                        }
                    }
                    let mut p = prefix.clone();
                    p.push(sol.clone());
                    next.push(p);
                }
            }
            combos = next;
        }
        let n = self.spec.n();
        let mut out = Vec::new();
        for combo in combos {
            out.push(self.evaluate_frsb(composition, &combo, k == n));
        }
        Ok(out)
    }

    fn evaluate_frsb(&self, composition: &[usize], chains: &[ChainSolution], skip3: bool) -> FrsbSolution {
        let spec = &self.spec;
        let mut blocks = Vec::new();
        let mut segments = Vec::new();
        for (j, c) in chains.iter().enumerate() {
            if j > 0 {
                segments.push(Segment { a: *chains[j - 1].knots.last().unwrap(), b: c.knots[0] });
            }
            for (l, m) in c.densities().into_iter().enumerate() {
                blocks.push(Block { a: c.knots[l], b: c.knots[l + 1], m });
            }
        }
        let delta = *chains.last().unwrap().tails.last().unwrap();
        let cond2_ok = chains.iter().all(|c| c.cond2(spec, self.opts.cond_tol));
        let cond4_ok = segments.iter().all(|s| segment_admissible(spec, s.a, s.b));
        let measure = ParisiMeasure::new(spec, &blocks, &segments, delta).ok();
        let cond3_ok = skip3
            || measure
                .as_ref()
                .is_some_and(|mu| chains.iter().all(|c| self.blocks_ok(&c.knots, mu)));
        let verification =
            measure.as_ref().map(|mu| mu.verify(self.opts.verify_grid, &self.opts.tolerances));
        let f_values = chains
            .iter()
            .map(|c| match c.profile(spec) {
                Some(p) => (p.f[0], p.f[p.s()], c.star),
                None => (f64::NAN, f64::NAN, c.star),
            })
            .collect();
        FrsbSolution {
            composition: composition.to_vec(),
            block_chains: chains.iter().map(|c| c.knots.clone()).collect(),
            f_values,
            residuals: chains.iter().flat_map(|c| c.residuals.clone()).collect(),
            cond2_ok,
            cond3_ok,
            cond4_ok,
            measure,
            verification,
        }
    }
}

/// Convenience wrapper around [`Solver::solve_rsb`].
pub fn solve_rsb(spec: &Mixture, k: usize) -> Result<RsbSolution> {
    Solver::new(spec, SolverOptions::default()).solve_rsb(k)
}

/// Convenience wrapper around [`Solver::solve_frsb`].
pub fn solve_frsb(spec: &Mixture, composition: &[usize]) -> Result<FrsbSolution> {
    Solver::new(spec, SolverOptions::default()).solve_frsb(composition)
}
