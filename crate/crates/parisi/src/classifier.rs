//! Phase classification.
//!
//! Two routes run side by side. The constructive route solves the chain
//! systems of every candidate phase and keeps what passes the optimality
//! check. The criterion route decides the phase from the chain sets alone:
//! `k`-RSB when `(k)` chains from 0 to 1 and `(k + 1)` does not, FRSB
//! compositions when they chain and no one-step refinement does (skipped at
//! `k = n`). The constructive answer is returned; the other is recorded.
//!
//! The ordering relation alone says nothing about the gaps between the sets,
//! which become segments of the measure. The criterion route therefore also
//! asks `xi''^(-1/2)` to be concave on each gap. Without this a trailing
//! segment up to 1 would pass whenever an interior chain exists.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hset::HSearch;
use crate::kernels::{h_ext, r1, r2};
use crate::measure::{MeasureJson, ParisiMeasure, VerificationReport};
use crate::numerics::{all_roots, damped_newton, NewtonParams};
use crate::oracle::{minimize_cs, OracleOptions};
use crate::solver::{segment_admissible, Solver, SolverOptions};
use crate::Mixture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "RSB")]
    Rsb,
    #[serde(rename = "FRSB")]
    Frsb,
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseKind::Rs => "RS",
            PhaseKind::Rsb => "RSB",
            PhaseKind::Frsb => "FRSB",
        })
    }
}

/// RS, `k`-RSB or `k`-FRSB with its composition.
///
/// For FRSB the composition `(s_1, ..., s_t)` lists the number of blocks
/// before each segment and after the last one; a trailing 0 means the last
/// segment ends at 1. `f_set` holds the partial sums `s_1 + ... + s_j`,
/// `j < t`, i.e. the blocks followed by a segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub kind: PhaseKind,
    pub k: usize,
    pub composition: Vec<usize>,
    pub f_set: Vec<usize>,
}

impl PhaseLabel {
    pub fn rs() -> Self {
        Self { kind: PhaseKind::Rs, k: 0, composition: vec![], f_set: vec![] }
    }

    pub fn rsb(k: usize) -> Self {
        Self { kind: PhaseKind::Rsb, k, composition: vec![k], f_set: vec![] }
    }

    pub fn frsb(composition: &[usize]) -> Self {
        let t = composition.len();
        let f_set = composition[..t.saturating_sub(1)]
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        Self {
            kind: PhaseKind::Frsb,
            k: composition.iter().sum(),
            composition: composition.to_vec(),
            f_set,
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PhaseKind::Rs => f.write_str("RS"),
            PhaseKind::Rsb => write!(f, "{}-RSB", self.k),
            PhaseKind::Frsb => {
                let c: Vec<String> = self.composition.iter().map(|s| s.to_string()).collect();
                let w: Vec<String> = self.f_set.iter().map(|s| s.to_string()).collect();
                write!(f, "{}-FRSB ({}) F={{{}}}", self.k, c.join(","), w.join(","))
            }
        }
    }
}

/// FRSB compositions with `k` blocks in search order (lexicographic).
pub fn frsb_compositions(k: usize) -> Vec<Vec<usize>> {
    fn parts(k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            out.push(prefix.clone());
            return;
        }
        for s in 1..=k {
            prefix.push(s);
            parts(k - s, prefix, out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    parts(k, &mut Vec::new(), &mut all);
    let mut out = Vec::new();
    for c in all {
        if c.len() >= 2 {
            out.push(c.clone());
        }
        let mut z = c;
        z.push(0);
        out.push(z);
    }
    out.sort();
    out
}

/// Compositions one step finer than `c`: one entry promoted, or a single
/// block inserted at any position.
pub fn refinements(c: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for j in 0..c.len() {
        let mut p = c.to_vec();
        p[j] += 1;
        out.push(p);
    }
    for j in 0..=c.len() {
        let mut p = c.to_vec();
        p.insert(j, 1);
        if p[..p.len() - 1].iter().all(|&s| s > 0) {
            out.push(p);
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub solver: SolverOptions,
    /// Run the oracle cross-check.
    pub oracle: bool,
    pub oracle_cells: usize,
    /// Run the criterion route.
    pub criterion: bool,
    /// Evaluate every candidate instead of stopping at the first verified
    /// one. Needed to detect ambiguity.
    pub exhaustive: bool,
    /// Relative energy spread under which several verified candidates count
    /// as a phase boundary rather than a contradiction.
    pub boundary_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            oracle: true,
            oracle_cells: 2000,
            criterion: true,
            exhaustive: true,
            boundary_tol: 1e-7,
        }
    }
}

impl ClassifyOptions {
    /// Constructive route only, first hit wins.
    pub fn fast() -> Self {
        Self { oracle: false, criterion: false, exhaustive: false, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub label: PhaseLabel,
    pub measure: ParisiMeasure,
    pub energy: f64,
    pub verification: VerificationReport,
    /// `None` when the criterion route was not run.
    pub criterion_agrees: Option<bool>,
    pub criterion_label: Option<PhaseLabel>,
    pub oracle_energy: Option<f64>,
    /// `|energy - oracle energy|`.
    pub oracle_gap: Option<f64>,
    pub near_boundary: bool,
    /// Why the rejected candidates failed.
    pub diagnostics: Vec<String>,
}

/// JSON layout of a classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationJson {
    pub phase: PhaseLabel,
    pub energy: f64,
    pub measure: MeasureJson,
    pub verification: VerificationReport,
    pub criterion_agrees: Option<bool>,
    pub oracle_gap: Option<f64>,
    pub near_boundary: bool,
}

impl ClassificationResult {
    pub fn to_json(&self) -> ClassificationJson {
        ClassificationJson {
            phase: self.label.clone(),
            energy: self.energy,
            measure: self.measure.to_json(),
            verification: self.verification,
            criterion_agrees: self.criterion_agrees,
            oracle_gap: self.oracle_gap,
            near_boundary: self.near_boundary,
        }
    }
}

struct Candidate {
    label: PhaseLabel,
    measure: ParisiMeasure,
    verification: VerificationReport,
}

/// Every candidate label in search order: RS, RSB by `k`, FRSB by `k`.
fn search_order(n: usize) -> Vec<PhaseLabel> {
    let mut out = vec![PhaseLabel::rs()];
    out.extend((1..=n).map(PhaseLabel::rsb));
    for k in 1..=n {
        out.extend(frsb_compositions(k).iter().map(|c| PhaseLabel::frsb(c)));
    }
    out
}

fn construct(solver: &mut Solver, label: &PhaseLabel) -> Result<Candidate> {
    let spec = solver.spec().clone();
    let opts = *solver.options();
    match label.kind {
        PhaseKind::Rs => {
            let measure = ParisiMeasure::replica_symmetric(&spec, spec.xi1(1.0).sqrt().recip())?;
            let verification = measure.verify(opts.verify_grid, &opts.tolerances);
            if !verification.passed {
                return Err(Error::NoSolution { reason: format!("RS fails, min g = {:.3e}", verification.min_g) });
            }
            Ok(Candidate { label: label.clone(), measure, verification })
        }
        PhaseKind::Rsb => {
            let s = solver.solve_rsb(label.k)?;
            Ok(Candidate {
                label: label.clone(),
                measure: s.measure.expect("accepted solutions carry a measure"),
                verification: s.verification.expect("accepted solutions are verified"),
            })
        }
        PhaseKind::Frsb => {
            let s = solver.solve_frsb(&label.composition)?;
            Ok(Candidate {
                label: label.clone(),
                measure: s.measure.expect("accepted solutions carry a measure"),
                verification: s.verification.expect("accepted solutions are verified"),
            })
        }
    }
}

/// Phase decided from the chain sets alone.
pub fn criterion_route(hs: &mut HSearch, rs_passes: bool) -> Option<PhaseLabel> {
    if rs_passes {
        return Some(PhaseLabel::rs());
    }
    let n = hs.spec().n();
    for k in 1..=n {
        if hs.tilde_chain(&[k]).holds && (k == n || !hs.tilde_chain(&[k + 1]).holds) {
            return Some(PhaseLabel::rsb(k));
        }
    }
    for k in 1..=n {
        for c in frsb_compositions(k) {
            let v = hs.tilde_chain(&c);
            if !v.holds {
                continue;
            }
            // the gaps between consecutive sets become segments
            let spec = hs.spec().clone();
            if !v.spans.windows(2).all(|w| segment_admissible(&spec, w[0].1, w[1].0)) {
                continue;
            }
            if k == n || refinements(&c).iter().all(|r| !hs.tilde_chain(r).holds) {
                return Some(PhaseLabel::frsb(&c));
            }
        }
    }
    None
}

/// Classifies the zero-temperature Parisi measure of `spec`.
pub fn classify(spec: &Mixture, opts: &ClassifyOptions) -> Result<ClassificationResult> {
    let mut hs = HSearch::new(Solver::new(spec, opts.solver));
    let mut found: Vec<Candidate> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut rs_passes = false;
    for label in search_order(spec.n()) {
        match construct(hs.solver(), &label) {
            Ok(c) => {
                if c.label.kind == PhaseKind::Rs {
                    rs_passes = true;
                }
                found.push(c);
                if !opts.exhaustive {
                    break;
                }
            }
            Err(e @ Error::AmbiguousPhase { .. }) => return Err(e),
            Err(e) => diagnostics.push(format!("{label}: {e}")),
        }
    }
    if found.is_empty() {
        return Err(Error::NoPhaseFound { diagnostics: diagnostics.join("\n") });
    }
    let energies: Vec<f64> = found.iter().map(|c| c.measure.cs_energy()).collect();
    let near_boundary = found.len() > 1;
    if near_boundary {
        let e0 = energies[0];
        if energies.iter().any(|e| (e - e0).abs() > opts.boundary_tol * e0.abs()) {
            return Err(Error::AmbiguousPhase {
                labels: found.iter().map(|c| c.label.to_string()).collect::<Vec<_>>().join(", "),
            });
        }
    }
    let best = found.swap_remove(0);
    let energy = energies[0];
    let criterion_label = if opts.criterion { criterion_route(&mut hs, rs_passes) } else { None };
    let criterion_agrees = opts.criterion.then(|| criterion_label.as_ref() == Some(&best.label));
    let oracle_energy = if opts.oracle {
        let o = OracleOptions { cells: opts.oracle_cells, ..OracleOptions::default() };
        Some(minimize_cs(spec, &o)?.energy)
    } else {
        None
    };
    Ok(ClassificationResult {
        label: best.label,
        measure: best.measure,
        energy,
        verification: best.verification,
        criterion_agrees,
        criterion_label,
        oracle_energy,
        oracle_gap: oracle_energy.map(|o| (energy - o).abs()),
        near_boundary,
        diagnostics,
    })
}

/// One weight axis of a scan: fixed, or `lo, lo + step, ...` up to `hi`.
#[derive(Debug, Clone, Copy)]
pub enum Axis {
    Fixed(f64),
    Range { lo: f64, hi: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::Fixed(v) => vec![v],
            Axis::Range { lo, hi, step } => {
                let count = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=count).map(|i| lo + step * i as f64).collect()
            }
        }
    }
}

/// One row of a scan.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub weights: Vec<f64>,
    pub outcome: std::result::Result<ScanSummary, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanSummary {
    pub label: PhaseLabel,
    pub energy: f64,
    pub oracle_gap: Option<f64>,
    pub near_boundary: bool,
    pub criterion_agrees: Option<bool>,
}

/// Weight grid of a scan. The last weight is derived when `derive_last` is set.
pub fn scan_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for a in axes {
        let vals = a.values();
        pts = pts
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Classifies one grid point of a scan.
pub fn scan_row(exponents: &[u32], weights: &[f64], derive_last: bool, opts: &ClassifyOptions) -> ScanRow {
    let outcome = Mixture::new(exponents, weights, derive_last)
        .and_then(|spec| {
            let r = classify(&spec, opts)?;
            Ok((spec, r))
        })
        .map(|(_, r)| ScanSummary {
            label: r.label,
            energy: r.energy,
            oracle_gap: r.oracle_gap,
            near_boundary: r.near_boundary,
            criterion_agrees: r.criterion_agrees,
        })
        .map_err(|e| e.to_string());
    ScanRow { weights: weights.to_vec(), outcome }
}

/// Sequential scan over the weight grid, in grid order.
pub fn phase_scan(exponents: &[u32], axes: &[Axis], derive_last: bool, opts: &ClassifyOptions) -> Vec<ScanRow> {
    scan_points(axes).iter().map(|w| scan_row(exponents, w, derive_last, opts)).collect()
}

/// Phase boundaries of `xi = lambda x^p + (1 - lambda) x^s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub p: u32,
    pub s: u32,
    /// `(x, lambda)` between 1-RSB and 2-RSB.
    pub rsb1_to_rsb2: Option<(f64, f64)>,
    /// `(x, lambda)` between 2-RSB and 2-FRSB.
    pub rsb2_to_frsb2: Option<(f64, f64)>,
    /// Between 2-FRSB and 1-FRSB.
    pub frsb2_to_frsb1: Option<f64>,
    /// Between 1-FRSB and 1-RSB.
    pub frsb1_to_rsb1: Option<f64>,
    pub notes: Vec<String>,
}

fn two_spin(p: u32, s: u32, lambda: f64) -> Option<Mixture> {
    Mixture::new(&[p, s], &[lambda, 1.0 - lambda], false).ok()
}

/// Solves a boundary system `{e1(x) = 0, e2(x) = 0}` in `(x, lambda)`.
fn boundary_system<F>(p: u32, s: u32, eqs: F) -> Option<(f64, f64)>
where
    F: Fn(&Mixture, f64) -> Option<(f64, f64)>,
{
    let lambdas: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let xs: Vec<f64> = (1..400).map(|i| i as f64 / 400.0).collect();
    // roots of the first equation, per lambda, with the second evaluated there
    let rows: Vec<Vec<(f64, f64)>> = lambdas
        .iter()
        .map(|&lam| {
            let Some(spec) = two_spin(p, s, lam) else { return vec![] };
            let f = |x: f64| eqs(&spec, x).map_or(f64::NAN, |v| v.0);
            all_roots(f, &xs, 1e-14)
                .into_iter()
                .filter_map(|x| eqs(&spec, x).map(|v| (x, v.1)))
                .collect()
        })
        .collect();
    let resid = |v: &[f64]| -> Option<Vec<f64>> {
        let spec = two_spin(p, s, v[1])?;
        if !(v[0] > 0.0 && v[0] < 1.0) {
            return None;
        }
        let (a, b) = eqs(&spec, v[0])?;
        Some(vec![a, b])
    };
    for i in 0..rows.len().saturating_sub(1) {
        for &(x0, g0) in &rows[i] {
            for &(x1, g1) in &rows[i + 1] {
                if (x1 - x0).abs() > 0.05 || !(g0 * g1 <= 0.0) {
                    continue;
                }
                let t = g0 / (g0 - g1);
                let seed = [x0 + t * (x1 - x0), lambdas[i] + t * (lambdas[i + 1] - lambdas[i])];
                let params = NewtonParams { f_tol: 1e-14, ..NewtonParams::default() };
                let r = damped_newton(|v| resid(v), &seed, params);
                if r.converged || r.residual < 1e-12 {
                    return Some((r.x[0], r.x[1]));
                }
            }
        }
    }
    None
}

fn same(a: &Result<PhaseLabel>, b: &PhaseLabel) -> bool {
    matches!(a, Ok(l) if l == b)
}

/// Locates where the classification leaves `from`, scanning `lambda` up from
/// `start` and bisecting the first change.
fn label_edge(p: u32, s: u32, start: f64, from: &PhaseLabel) -> Option<(f64, PhaseLabel)> {
    let label_at = |lam: f64| -> Result<PhaseLabel> {
        let spec = two_spin(p, s, lam).ok_or(Error::DomainError { what: "lambda", value: lam })?;
        classify(&spec, &ClassifyOptions::fast()).map(|r| r.label)
    };
    let step = 0.005;
    let mut lo = start;
    let mut hi = start + step;
    let next = loop {
        if hi >= 1.0 {
            return None;
        }
        let l = label_at(hi);
        if same(&l, from) {
            lo = hi;
            hi += step;
        } else if let Ok(l) = l {
            break l;
        } else {
            hi += step;
        }
    };
    let side = |lam: f64| same(&label_at(lam), from);
    let edge = bisect(side, lo, hi, 1e-7);
    Some((edge, next))
}

/// Bisection on a predicate that is true at `lo` and false at `hi`.
fn bisect<F: Fn(f64) -> bool>(pred: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Boundaries of the two-component family in the order the phases appear as
/// the weight on `x^p` grows.
pub fn two_component_boundaries(p: u32, s: u32) -> Result<BoundaryTable> {
    if !(3 <= p && p < s) {
        return Err(Error::DomainError { what: "3 <= p < s", value: p as f64 });
    }
    let mut notes = Vec::new();
    let a = boundary_system(p, s, |spec, x| {
        let z1 = r1(spec, 0.0, x, 1.0).ok()?;
        let z2 = r1(spec, x, 1.0, 0.0).ok()?;
        Some((h_ext(spec, 0.0, x, z1), h_ext(spec, x, 1.0, z2)))
    });
    if a.is_none() {
        notes.push("no 1-RSB/2-RSB boundary found".into());
    }
    let b = boundary_system(p, s, |spec, x| {
        let z1 = r2(spec, 0.0, x);
        let z2 = r2(spec, 1.0, x).recip();
        Some((h_ext(spec, 0.0, x, z1), h_ext(spec, x, 1.0, z2)))
    });
    let mut c = None;
    let mut d = None;
    match b {
        Some((_, lam)) => {
            match label_edge(p, s, lam + 1e-4, &PhaseLabel::frsb(&[1, 1])) {
                Some((edge, next)) => {
                    c = Some(edge);
                    if next != PhaseLabel::frsb(&[1, 0]) {
                        notes.push(format!("2-FRSB is followed by {next}"));
                    }
                    match label_edge(p, s, edge + 1e-5, &next) {
                        Some((edge2, after)) => {
                            d = Some(edge2);
                            if after != PhaseLabel::rsb(1) {
                                notes.push(format!("{next} is followed by {after}"));
                            }
                        }
                        None => notes.push(format!("{next} persists up to lambda = 1")),
                    }
                }
                None => notes.push("2-FRSB persists up to lambda = 1".into()),
            }
        }
        None => notes.push("no 2-RSB/2-FRSB boundary found".into()),
    }
    Ok(BoundaryTable { p, s, rsb1_to_rsb2: a, rsb2_to_frsb2: b, frsb2_to_frsb1: c, frsb1_to_rsb1: d, notes })
}
