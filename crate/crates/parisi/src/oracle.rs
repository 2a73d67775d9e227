//! Direct minimization of the Crisanti-Sommers functional.
//!
//! With `phi(x) = nu((x, 1])` the functional reads
//! `Q = 1/2 int_0^1 (xi''(t) phi(t) + 1/phi(t)) dt`, to be minimized over
//! positive, nonincreasing, concave `phi`. The oracle discretizes `phi` as a
//! piecewise linear function on a grid, integrates both terms exactly for that
//! interpolant and solves the resulting convex program by a log-barrier
//! interior point method. The barrier Hessian is pentadiagonal, so each Newton
//! step is a banded Cholesky solve.
//!
//! Nothing here uses the chain machinery, which makes the energy an
//! independent check on the classifier.

use serde::{Deserialize, Serialize};

use crate::classifier::PhaseLabel;
use crate::error::{Error, Result};
use crate::measure::omega;
use crate::numerics::gauss_legendre_rule;
use crate::Mixture;

/// Newton steps per barrier parameter. Later steps only chase rounding.
const CENTERING_STEPS: usize = 50;

/// Settings of [`minimize_cs`].
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Number of grid cells.
    pub cells: usize,
    /// Put this fraction of the cells on `[0.9, 1]`, where the large
    /// exponents live. Zero gives a uniform grid.
    pub refine_near_one: f64,
    /// Newton steps allowed in total.
    pub max_iter: usize,
    /// Target duality gap relative to the energy.
    pub tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { cells: 2000, refine_near_one: 0.6, max_iter: 5000, tol: 1e-9 }
    }
}

/// Discrete minimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSolution {
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub energy: f64,
    pub delta: f64,
    pub iterations: usize,
    /// Duality gap bound of the barrier path at exit.
    pub kkt_residual: f64,
    pub converged: bool,
}

impl OracleSolution {
    /// `(x, phi)` rows.
    pub fn to_csv_rows(&self) -> Vec<(f64, f64)> {
        self.grid.iter().copied().zip(self.phi.iter().copied()).collect()
    }
}

fn make_grid(cells: usize, refine: f64) -> Vec<f64> {
    let refine = refine.clamp(0.0, 0.95);
    let hi = ((cells as f64) * refine).round() as usize;
    if hi == 0 {
        return (0..=cells).map(|i| i as f64 / cells as f64).collect();
    }
    let lo = cells - hi;
    let mut g: Vec<f64> = (0..lo).map(|i| 0.9 * i as f64 / lo as f64).collect();
    g.extend((0..=hi).map(|i| 0.9 + 0.1 * i as f64 / hi as f64));
    g
}

/// Symmetric banded matrix with two off-diagonals.
struct Penta {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Penta {
    fn zeros(n: usize) -> Self {
        Self { d0: vec![0.0; n], d1: vec![0.0; n], d2: vec![0.0; n] }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match j - i {
            0 => self.d0[i] += v,
            1 => self.d1[i] += v,
            2 => self.d2[i] += v,
            _ => unreachable!("bandwidth is two"),
        }
    }

    /// Solves `A x = b` by banded `L D L^T`. `None` if not positive definite.
    fn solve(mut self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.d0.len();
        // in place: d0 -> D, d1/d2 -> unit lower factors
        for i in 0..n {
            if i >= 1 {
                let l1 = self.d1[i - 1];
                self.d0[i] -= l1 * l1 * self.d0[i - 1];
                if i >= 2 {
                    let l2 = self.d2[i - 2];
                    self.d0[i] -= l2 * l2 * self.d0[i - 2];
                }
            }
            if !(self.d0[i] > 0.0) || !self.d0[i].is_finite() {
                return None;
            }
            if i + 1 < n {
                let mut v = self.d1[i];
                if i >= 1 {
                    v -= self.d2[i - 1] * self.d1[i - 1] * self.d0[i - 1];
                }
                self.d1[i] = v / self.d0[i];
            }
            if i + 2 < n {
                self.d2[i] /= self.d0[i];
            }
        }
        let mut y = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                y[i] -= self.d1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                y[i] -= self.d2[i - 2] * y[i - 2];
            }
        }
        for i in 0..n {
            y[i] /= self.d0[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                y[i] -= self.d1[i] * y[i + 1];
            }
            if i + 2 < n {
                y[i] -= self.d2[i] * y[i + 2];
            }
        }
        Some(y)
    }
}

struct Problem {
    x: Vec<f64>,
    h: Vec<f64>,
    w: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Problem {
    fn new(spec: &Mixture, x: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|c| c[1] - c[0]).collect();
        // exact int xi'' * hat_j
        let mut w = vec![0.0; n];
        for j in 0..n - 1 {
            let (a, b) = (x[j], x[j + 1]);
            let left = spec.bregman(a, b) / h[j];
            w[j] += left;
            w[j + 1] += spec.slope_gap(a, b) - left;
        }
        let (t, wt) = gauss_legendre_rule(16);
        let nodes = t.iter().map(|v| 0.5 * (v + 1.0)).collect();
        let weights = wt.iter().map(|v| 0.5 * v).collect();
        Self { x, h, w, nodes, weights }
    }

    fn constraints(&self, phi: &[f64]) -> Vec<f64> {
        let n = phi.len();
        let mut c = Vec::with_capacity(n - 1);
        c.push((phi[0] - phi[1]) / self.h[0]);
        for j in 1..n - 1 {
            c.push((phi[j] - phi[j - 1]) / self.h[j - 1] - (phi[j + 1] - phi[j]) / self.h[j]);
        }
        c
    }

    /// Sparse gradient of constraint `k` as `(index, value)` pairs.
    fn constraint_grad(&self, k: usize) -> [(usize, f64); 3] {
        if k == 0 {
            let a = 1.0 / self.h[0];
            [(0, a), (1, -a), (1, 0.0)]
        } else {
            let (l, r) = (1.0 / self.h[k - 1], 1.0 / self.h[k]);
            [(k - 1, -l), (k, l + r), (k + 1, -r)]
        }
    }

    /// Barrier value at `phi + alpha step` minus the value at `phi`, summed
    /// term by term so that nothing cancels at large `t`.
    fn barrier_change(&self, phi: &[f64], c: &[f64], step: &[f64], dc: &[f64], alpha: f64, t: f64) -> f64 {
        let lin: f64 = self.w.iter().zip(step).map(|(w, s)| w * s).sum::<f64>() * alpha;
        let mut inv = 0.0;
        for j in 0..self.h.len() {
            let (a, b) = (phi[j], phi[j + 1]);
            let (da, db) = (alpha * step[j], alpha * step[j + 1]);
            let g: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(u, wt)| {
                    let v = a + u * (b - a);
                    let dv = da + u * (db - da);
                    -wt * dv / (v * (v + dv))
                })
                .sum();
            inv += self.h[j] * g;
        }
        let logs: f64 = c.iter().zip(dc).map(|(ck, dk)| (alpha * dk / ck).ln_1p()).sum();
        0.5 * t * (lin + inv) - logs
    }

    fn energy(&self, phi: &[f64]) -> f64 {
        let lin: f64 = self.w.iter().zip(phi).map(|(w, p)| w * p).sum();
        let mut inv = 0.0;
        for j in 0..self.h.len() {
            let (a, b) = (phi[j], phi[j + 1]);
            let g: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(t, wt)| wt / (a + t * (b - a)))
                .sum();
            inv += self.h[j] * g;
        }
        0.5 * (lin + inv)
    }

    /// Gradient and Hessian of the energy.
    fn derivatives(&self, phi: &[f64], hess: &mut Penta) -> Vec<f64> {
        let mut g: Vec<f64> = self.w.iter().map(|w| 0.5 * w).collect();
        for j in 0..self.h.len() {
            let (a, b) = (phi[j], phi[j + 1]);
            let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (t, wt) in self.nodes.iter().zip(&self.weights) {
                let v = a + t * (b - a);
                let i2 = wt / (v * v);
                let i3 = 2.0 * wt / (v * v * v);
                ga -= (1.0 - t) * i2;
                gb -= t * i2;
                haa += (1.0 - t) * (1.0 - t) * i3;
                hab += (1.0 - t) * t * i3;
                hbb += t * t * i3;
            }
            let s = 0.5 * self.h[j];
            g[j] += s * ga;
            g[j + 1] += s * gb;
            hess.add(j, j, s * haa);
            hess.add(j, j + 1, s * hab);
            hess.add(j + 1, j + 1, s * hbb);
        }
        g
    }
}

/// Minimizes the discretized functional.
pub fn minimize_cs(spec: &Mixture, opts: &OracleOptions) -> Result<OracleSolution> {
    if opts.cells < 256 {
        return Err(Error::DomainError { what: "oracle cells (at least 256)", value: opts.cells as f64 });
    }
    let prob = Problem::new(spec, make_grid(opts.cells, opts.refine_near_one));
    let n = prob.x.len();
    let m = n - 1;
    // strictly concave, decreasing start around the replica symmetric tail
    let d0 = spec.xi1(1.0).sqrt().recip();
    let mut phi: Vec<f64> = prob.x.iter().map(|x| d0 * (1.0 + 0.5 * (1.0 - x * x))).collect();
    let mut t = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // centering
        for _ in 0..CENTERING_STEPS {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            let mut hess = Penta::zeros(n);
            let ge = prob.derivatives(&phi, &mut hess);
            for v in hess.d0.iter_mut().chain(hess.d1.iter_mut()).chain(hess.d2.iter_mut()) {
                *v *= t;
            }
            let mut grad: Vec<f64> = ge.iter().map(|v| t * v).collect();
            let c = prob.constraints(&phi);
            for (k, ck) in c.iter().enumerate() {
                let a = prob.constraint_grad(k);
                let inv = 1.0 / ck;
                for &(i, ai) in &a {
                    grad[i] -= ai * inv;
                }
                for (p, &(i, ai)) in a.iter().enumerate() {
                    for &(j, aj) in &a[p..] {
                        if ai != 0.0 && aj != 0.0 {
                            let v = ai * aj * inv * inv;
                            hess.add(i, j, v);
                        }
                    }
                }
            }
            let rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
            let Some(step) = hess.solve(&rhs) else { break };
            let dec: f64 = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            if dec < 1e-9 {
                break;
            }
            // the constraints are linear, so the trial values follow from one product
            let dc = prob.constraints(&step);
            let mut alpha: f64 = 1.0;
            for (ck, dk) in c.iter().zip(&dc) {
                if *dk < 0.0 {
                    alpha = alpha.min(-0.99 * ck / dk);
                }
            }
            if step[n - 1] < 0.0 {
                alpha = alpha.min(-0.99 * phi[n - 1] / step[n - 1]);
            }
            let mut moved = false;
            for _ in 0..60 {
                let change = prob.barrier_change(&phi, &c, &step, &dc, alpha, t);
                if change <= -0.25 * alpha * dec {
                    for (p, s) in phi.iter_mut().zip(&step) {
                        *p += alpha * s;
                    }
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let energy = prob.energy(&phi);
        if m as f64 / t <= opts.tol * energy {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        t *= 4.0;
    }
    let energy = prob.energy(&phi);
    Ok(OracleSolution {
        delta: phi[n - 1],
        grid: prob.x,
        phi,
        energy,
        iterations,
        kkt_residual: m as f64 / t,
        converged,
    })
}

/// Tolerances of [`extract_phase`]. All are empirical.
#[derive(Debug, Clone, Copy)]
pub struct ExtractTolerances {
    /// Relative distance to `xi''^(-1/2)` allowed on a segment.
    pub seg: f64,
    /// Half width, in cells, of the window comparing slope and `omega` rises.
    pub window: usize,
    /// Accepted deviation from 1 of the ratio between the two rises.
    pub rise_ratio: f64,
    /// How far a kink must stand above the slope rise around it.
    pub prominence: f64,
    /// Total drop of `phi` relative to `phi(1)` below which the tail is flat.
    pub flat: f64,
    /// Shortest segment, in grid cells.
    pub min_run: usize,
    /// Distance from a segment end within which slope jumps are not kinks.
    pub junction: f64,
}

impl Default for ExtractTolerances {
    fn default() -> Self {
        Self { seg: 1e-4, window: 4, rise_ratio: 0.5, prominence: 8.0, flat: 1e-3, min_run: 6, junction: 4e-3 }
    }
}

/// Per-cell rise of `omega`, relative to the slope, below which a stretch
/// cannot be told apart from a block.
const MIN_RISE: f64 = 1e-6;

/// Structure read off an oracle solution. Heuristic, never authoritative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeuristicPhase {
    pub label: PhaseLabel,
    /// Block boundaries that are not segment ends.
    pub breakpoints: Vec<f64>,
    pub segments: Vec<(f64, f64)>,
}

/// Strict local maxima of `r` on `lo..hi` whose height exceeds `prom` times
/// the deepest point separating them from anything higher, or from the range
/// ends, on both sides.
fn prominent_peaks(r: &[f64], lo: usize, hi: usize, prom: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for j in lo + 1..hi.saturating_sub(1) {
        if !(r[j] > r[j - 1] && r[j] >= r[j + 1]) {
            continue;
        }
        let mut left = r[j];
        for i in (lo..j).rev() {
            if r[i] > r[j] {
                break;
            }
            left = left.min(r[i]);
        }
        let mut right = r[j];
        for &v in &r[j + 1..hi] {
            if v > r[j] {
                break;
            }
            right = right.min(v);
        }
        if r[j] >= prom * left.max(right) {
            out.push(j);
        }
    }
    out
}

/// Splits the oracle tail into affine blocks and runs along `xi''^(-1/2)`.
///
/// With `gamma = -phi'` per cell, `c` is its rise from one cell to the next
/// (the discrete concavity). On a segment `c` follows the rise of `omega`,
/// the slope of `xi''^(-1/2)`, and `phi` sits on the curve. Block boundaries
/// show up as peaks of `c / gamma`, smeared over several cells when the
/// optimality margin around them is thin; only peaks that stand out on both
/// sides count, so the ramp where a block meets a segment is not a kink.
pub fn extract_phase(spec: &Mixture, sol: &OracleSolution, tol: &ExtractTolerances) -> Result<HeuristicPhase> {
    let x = &sol.grid;
    let phi = &sol.phi;
    let n = x.len();
    let w = tol.window.max(1);
    if n < 4 * w + 8 {
        return Err(Error::Unclassifiable { reason: "grid too coarse".into() });
    }
    if phi[0] - phi[n - 1] <= tol.flat * phi[n - 1] {
        return Ok(HeuristicPhase { label: PhaseLabel::rs(), breakpoints: vec![], segments: vec![] });
    }
    let gamma: Vec<f64> = (0..n - 1).map(|j| (phi[j] - phi[j + 1]) / (x[j + 1] - x[j])).collect();
    // rises at interior nodes 1..n-1, stored at the node index
    let mut rel = vec![0.0; n];
    let mut rise = vec![0.0; n];
    let mut om_rise = vec![0.0; n];
    for j in 1..n - 1 {
        rise[j] = gamma[j] - gamma[j - 1];
        rel[j] = rise[j] / gamma[j].abs().max(f64::MIN_POSITIVE);
        om_rise[j] = omega(spec, 0.5 * (x[j] + x[j + 1])) - omega(spec, 0.5 * (x[j - 1] + x[j]));
    }
    let near = |j: usize| {
        let c = spec.xi2(x[j]);
        c > 0.0 && (phi[j] * c.sqrt() - 1.0).abs() <= tol.seg
    };
    let on_segment: Vec<bool> = (0..n)
        .map(|j| {
            if j < w + 1 || j + w + 1 >= n {
                return false;
            }
            if !near(j) {
                return false;
            }
            let dg: f64 = rise[j - w..=j + w].iter().sum();
            let dw: f64 = om_rise[j - w..=j + w].iter().sum();
            // omega must visibly rise, or any near-flat block would pass
            let floor = (2 * w + 1) as f64 * MIN_RISE * gamma[j].abs();
            dw > floor && (dg / dw - 1.0).abs() <= tol.rise_ratio
        })
        .collect();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut j = 0;
    while j < n {
        if on_segment[j] {
            let start = j;
            while j < n && on_segment[j] {
                j += 1;
            }
            if j - start > tol.min_run {
                // the window test clips the ends; extend along the curve
                let (mut a, mut b) = (start, j - 1);
                while a > 1 && start - a < w && near(a - 1) {
                    a -= 1;
                }
                while b + 1 < n && b + 1 - j < w && near(b + 1) {
                    b += 1;
                }
                segments.push((a, b));
            }
        } else {
            j += 1;
        }
    }
    segments.dedup_by(|next, prev| {
        if next.0 <= prev.1 {
            prev.1 = prev.1.max(next.1);
            true
        } else {
            false
        }
    });
    let mut regions = Vec::new();
    let mut lo = 0;
    for &(a, b) in &segments {
        regions.push((lo, a));
        lo = b;
    }
    regions.push((lo, n - 1));
    let last_region = regions.len() - 1;
    let mut counts = Vec::new();
    let mut breakpoints = Vec::new();
    for (ri, &(a, b)) in regions.iter().enumerate() {
        if b < a + 3 {
            if ri == last_region && b + 1 >= n - 1 {
                counts.push(0);
                continue;
            }
            return Err(Error::Unclassifiable { reason: format!("block near {} shorter than 3 points", x[a]) });
        }
        // a slope jump where a block meets a segment is not a block boundary
        let lo = if ri == 0 { 1 } else { a + x[a..=b].partition_point(|&v| v < x[a] + tol.junction) };
        let hi = if ri == last_region { b } else { a + x[a..=b].partition_point(|&v| v <= x[b] - tol.junction) };
        let peaks = if hi > lo + 2 { prominent_peaks(&rel, lo, hi, tol.prominence) } else { vec![] };
        breakpoints.extend(peaks.iter().map(|&p| x[p]));
        counts.push(peaks.len() + 1);
    }
    let segs: Vec<(f64, f64)> = segments.iter().map(|&(a, b)| (x[a], x[b])).collect();
    let label = if segments.is_empty() { PhaseLabel::rsb(counts[0]) } else { PhaseLabel::frsb(&counts) };
    Ok(HeuristicPhase { label, breakpoints, segments: segs })
}
