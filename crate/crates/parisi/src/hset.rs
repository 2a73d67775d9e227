//! Membership in the chain sets `H^s`, their extremal points and the ordering
//! relation between them.
//!
//! A chain `(x_0, ..., x_s)` lies in `H^s` when it is strictly increasing and,
//! for every block `l`, the block kernel evaluated at the two ends `1/Z` and
//! `Y` of the admissible range brackets zero with the orientation
//! `(-1)^(s-l)`.
//!
//! Extremal points come from two sources. The chain systems of
//! [`crate::solver`] give boundary points exactly (the largest last knot of a
//! chain starting at 0 is a first-kind chain, and so on). A uniform grid over
//! the free coordinates (up to two of them) searches the whole set. A grid
//! member wins when it beats the chain answer by more than one spacing. Sets
//! without pins use the interior chain system only, because their loose
//! members reach almost every coordinate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{chain_profile, h_ext, r2, Chain, KernelProfile};
use crate::solver::{ChainKind, Solver};
use crate::Mixture;

/// Default slack on margins.
pub const KAPPA_TOL: f64 = 1e-10;

/// Outcome of the membership test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaReport {
    pub chain: Vec<f64>,
    pub satisfied: bool,
    /// Per block, the `Z` and `Y` margins oriented so that `>= 0` passes.
    pub margins: Vec<(f64, f64)>,
    /// The same kernel values before orientation.
    pub raw: Vec<(f64, f64)>,
    #[serde(skip)]
    pub profile: Option<KernelProfile<f64>>,
    pub reason: Option<String>,
}

impl KappaReport {
    fn rejected(chain: &[f64], reason: String) -> Self {
        Self {
            chain: chain.to_vec(),
            satisfied: false,
            margins: vec![],
            raw: vec![],
            profile: None,
            reason: Some(reason),
        }
    }

    /// Smallest oriented margin.
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().fold(f64::INFINITY, |m, &(a, b)| m.min(a).min(b))
    }
}

/// `v^e` for `e = +-1`, with `0^-1 = inf`.
fn signed_pow(v: f64, plus: bool) -> f64 {
    if plus {
        v
    } else if v == 0.0 {
        f64::INFINITY
    } else {
        v.recip()
    }
}

/// Evaluates the membership condition of `chain` in `H^s`.
pub fn condition_kappa(spec: &Mixture, chain: &[f64], tol: f64) -> KappaReport {
    if chain.len() < 2 {
        return KappaReport::rejected(chain, "a chain needs at least two knots".into());
    }
    if let Some(i) = chain.windows(2).position(|w| !(w[1] > w[0])) {
        return KappaReport::rejected(chain, Error::ChainNotStrict { index: i + 1 }.to_string());
    }
    let c = match Chain::new(chain.to_vec()) {
        Ok(c) => c,
        Err(e) => return KappaReport::rejected(chain, e.to_string()),
    };
    let p = match chain_profile(spec, &c) {
        Ok(p) => p,
        Err(e) => return KappaReport::rejected(chain, e.to_string()),
    };
    let s = chain.len() - 1;
    let mut margins = Vec::with_capacity(s);
    let mut raw = Vec::with_capacity(s);
    for l in 1..=s {
        let even = (s - l).is_multiple_of(2);
        let (a, b) = (chain[l - 1], chain[l]);
        let base = r2(spec, a, b) / p.f[l];
        let zarg = |w: f64| {
            let v = base * w;
            if v.is_nan() {
                // 0 * inf: both factors are limits, the block is degenerate
                f64::INFINITY
            } else {
                v
            }
        };
        let hz = h_ext(spec, a, b, zarg(signed_pow(p.z, !even)));
        let hy = h_ext(spec, a, b, zarg(signed_pow(p.y, even)));
        let sign = if even { 1.0 } else { -1.0 };
        raw.push((hz, hy));
        margins.push((sign * hz, -sign * hy));
    }
    let failed = margins.iter().position(|&(a, b)| !(a >= -tol && b >= -tol));
    KappaReport {
        chain: chain.to_vec(),
        satisfied: failed.is_none(),
        margins,
        raw,
        profile: Some(p),
        reason: failed.map(|l| format!("block {} violates a margin", l + 1)),
    }
}

/// Which endpoints of the chain are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pin {
    /// `x_0 = 0`.
    First,
    /// `x_s = 1`.
    Last,
    Both,
    None,
}

/// Quantity extremized over the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    MaxLast,
    MinFirst,
}

/// An extremal chain together with its grid certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extremal {
    pub chain: Vec<f64>,
    /// Objective value (last or first knot).
    pub value: f64,
    /// Best objective among grid members, if the grid was searched.
    pub grid_value: Option<f64>,
    /// Grid spacing of the certificate.
    pub resolution: Option<f64>,
}

/// Extremal-point search with cached answers.
#[derive(Debug, Clone)]
pub struct HSearch {
    solver: Solver,
    tol: f64,
    grid: usize,
    cache: HashMap<(usize, Pin, Objective), std::result::Result<Extremal, String>>,
}

impl HSearch {
    pub fn new(solver: Solver) -> Self {
        Self { solver, tol: KAPPA_TOL, grid: 400, cache: HashMap::new() }
    }

    /// Points per free coordinate of the certificate grid (0 disables it).
    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn solver(&mut self) -> &mut Solver {
        &mut self.solver
    }

    pub fn spec(&self) -> &Mixture {
        self.solver.spec()
    }

    /// Extremal point of `H^s` under the pin.
    pub fn extremal_point(&mut self, s: usize, pin: Pin, objective: Objective) -> Result<Extremal> {
        if let Some(r) = self.cache.get(&(s, pin, objective)) {
            return r.clone().map_err(|reason| Error::NotFound { reason });
        }
        let r = self.compute_extremal(s, pin, objective);
        self.cache.insert((s, pin, objective), r.clone().map_err(|e| e.to_string()));
        r
    }

    fn compute_extremal(&mut self, s: usize, pin: Pin, objective: Objective) -> Result<Extremal> {
        if s == 0 {
            return Err(Error::NotFound { reason: "s must be at least 1".into() });
        }
        let kind = match pin {
            Pin::First => ChainKind::First,
            Pin::Last => ChainKind::Last,
            Pin::Both => ChainKind::Rsb,
            Pin::None => ChainKind::Interior,
        };
        let value = |c: &[f64]| match objective {
            Objective::MaxLast => c[c.len() - 1],
            Objective::MinFirst => c[0],
        };
        let better = |a: f64, b: f64| match objective {
            Objective::MaxLast => a > b,
            Objective::MinFirst => a < b,
        };
        let tol = self.tol;
        let spec = self.solver.spec().clone();
        let mut best: Option<Vec<f64>> = None;
        for sol in self.solver.chains(kind, s) {
            if !condition_kappa(&spec, &sol.knots, tol).satisfied {
                continue;
            }
            if best.as_ref().is_none_or(|b| better(value(&sol.knots), value(b))) {
                best = Some(sol.knots);
            }
        }
        // Without pins the set also holds loose chains far from any measure;
        // its extremes are taken from the interior chain system alone.
        let grid = if pin == Pin::None {
            None
        } else {
            grid_extreme(&spec, s, pin, objective, self.grid, tol)
        };
        let resolution = grid.as_ref().map(|_| 1.0 / self.grid as f64);
        let grid_best = grid.flatten();
        let grid_value = grid_best.as_ref().map(|c| value(c));
        // a grid member beyond the chain candidate by more than one spacing
        // wins; it is reported unpolished
        let step = resolution.unwrap_or(0.0);
        let chain = match (best, grid_best) {
            (Some(b), Some(g)) => {
                let shifted = match objective {
                    Objective::MaxLast => value(&g) - step,
                    Objective::MinFirst => value(&g) + step,
                };
                if better(shifted, value(&b)) {
                    g
                } else {
                    b
                }
            }
            (Some(b), None) => b,
            (None, Some(g)) => g,
            (None, None) => {
                return Err(Error::NotFound {
                    reason: format!("H^{s} with pin {pin:?} is empty at grid resolution"),
                })
            }
        };
        Ok(Extremal { value: value(&chain), chain, grid_value, resolution })
    }

    /// Whether `H^{s_1} < H^{s_2} < ...` holds, with the first set pinned at
    /// 0 and the last at 1. A trailing 0 stands for the singleton `{1}`.
    pub fn tilde_chain(&mut self, composition: &[usize]) -> TildeVerdict {
        let t = composition.len();
        let mut witnesses = Vec::new();
        if t == 0 || composition[..t - 1].contains(&0) {
            return TildeVerdict::no(witnesses, "malformed composition".into());
        }
        if t == 1 {
            return match self.extremal_point(composition[0], Pin::Both, Objective::MaxLast) {
                Ok(e) => TildeVerdict {
                    holds: true,
                    witnesses: vec![e.chain],
                    spans: vec![(0.0, 1.0)],
                    reason: None,
                },
                Err(e) => TildeVerdict::no(witnesses, e.to_string()),
            };
        }
        // (max last, min first) of every set in order
        let mut spans = Vec::with_capacity(t);
        for (j, &s) in composition.iter().enumerate() {
            let last = j + 1 == t;
            if last && s == 0 {
                spans.push((1.0, 1.0));
                witnesses.push(vec![1.0]);
                continue;
            }
            let pin = match (j == 0, last) {
                (true, _) => Pin::First,
                (false, true) => Pin::Last,
                (false, false) => Pin::None,
            };
            let lo = if pin == Pin::First { Ok(0.0) } else {
                self.extremal_point(s, pin, Objective::MinFirst).map(|e| e.value)
            };
            let hi = if pin == Pin::Last {
                Ok(1.0)
            } else {
                self.extremal_point(s, pin, Objective::MaxLast).map(|e| {
                    witnesses.push(e.chain.clone());
                    e.value
                })
            };
            match (lo, hi) {
                (Ok(lo), Ok(hi)) => {
                    if pin == Pin::Last {
                        if let Ok(e) = self.extremal_point(s, pin, Objective::MinFirst) {
                            witnesses.push(e.chain);
                        }
                    }
                    spans.push((lo, hi));
                }
                (Err(e), _) | (_, Err(e)) => {
                    return TildeVerdict::no(witnesses, format!("set {} ({s}): {e}", j + 1));
                }
            }
        }
        for j in 1..t {
            if spans[j - 1].1 > spans[j].0 {
                return TildeVerdict::no(
                    witnesses,
                    format!("max of set {} exceeds min of set {}", j, j + 1),
                );
            }
        }
        TildeVerdict { holds: true, witnesses, spans, reason: None }
    }
}

/// Verdict of [`HSearch::tilde_chain`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TildeVerdict {
    pub holds: bool,
    pub witnesses: Vec<Vec<f64>>,
    /// Per set, the smallest first and the largest last coordinate.
    pub spans: Vec<(f64, f64)>,
    pub reason: Option<String>,
}

impl TildeVerdict {
    fn no(witnesses: Vec<Vec<f64>>, reason: String) -> Self {
        Self { holds: false, witnesses, spans: vec![], reason: Some(reason) }
    }
}

/// Best grid member of `H^s` under the pin. `None` when there are more than
/// two free coordinates (or `n == 0`), `Some(None)` when no grid chain is a
/// member.
fn grid_extreme(
    spec: &Mixture,
    s: usize,
    pin: Pin,
    objective: Objective,
    n: usize,
    tol: f64,
) -> Option<Option<Vec<f64>>> {
    let free = match pin {
        Pin::Both => s - 1,
        Pin::First | Pin::Last => s,
        Pin::None => s + 1,
    };
    if n == 0 || free > 2 {
        return None;
    }
    let pts: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
    let assemble = |free_vals: &[f64]| -> Vec<f64> {
        let mut c = Vec::with_capacity(s + 1);
        if matches!(pin, Pin::First | Pin::Both) {
            c.push(0.0);
        }
        c.extend_from_slice(free_vals);
        if matches!(pin, Pin::Last | Pin::Both) {
            c.push(1.0);
        }
        c
    };
    let mut best: Option<Vec<f64>> = None;
    let mut consider = |c: Vec<f64>| {
        let v = match objective {
            Objective::MaxLast => c[s],
            Objective::MinFirst => -c[0],
        };
        let cur = best.as_ref().map(|b| match objective {
            Objective::MaxLast => b[s],
            Objective::MinFirst => -b[0],
        });
        if cur.is_none_or(|cv| v > cv) && condition_kappa(spec, &c, tol).satisfied {
            best = Some(c);
        }
    };
    match free {
        0 => consider(assemble(&[])),
        1 => pts.iter().for_each(|&a| consider(assemble(&[a]))),
        _ => {
            for (i, &a) in pts.iter().enumerate() {
                for &b in &pts[i + 1..] {
                    consider(assemble(&[a, b]));
                }
            }
        }
    }
    Some(best)
}

/// Convenience wrapper: extremal point with default solver settings.
pub fn extremal_point(spec: &Mixture, s: usize, pin: Pin, objective: Objective) -> Result<Extremal> {
    HSearch::new(Solver::new(spec, Default::default())).extremal_point(s, pin, objective)
}

/// Convenience wrapper: the ordering relation with default solver settings.
pub fn tilde_chain(spec: &Mixture, composition: &[usize]) -> TildeVerdict {
    HSearch::new(Solver::new(spec, Default::default())).tilde_chain(composition)
}
