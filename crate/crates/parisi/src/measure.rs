//! Measures `gamma(x) dx + Delta delta_1`, their tails, the Crisanti-Sommers
//! energy and the optimality check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::integrate;
use crate::Mixture;

/// Constant density `m` on `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub a: f64,
    pub b: f64,
    pub m: f64,
}

/// Interval `[a, b)` where the density is `omega = xi''' / (2 xi''^(3/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Block(Block),
    Segment(Segment),
}

impl Piece {
    pub fn a(&self) -> f64 {
        match self {
            Piece::Block(b) => b.a,
            Piece::Segment(s) => s.a,
        }
    }

    pub fn b(&self) -> f64 {
        match self {
            Piece::Block(b) => b.b,
            Piece::Segment(s) => s.b,
        }
    }
}

/// Gap allowed between abutting pieces.
const TILE_TOL: f64 = 1e-12;

/// A measure in the admissible class, tied to the mixture it was built for.
///
/// Per-piece data is cached at construction: the tail at each right end, the
/// integral of `1/tail^2` up to each left end and the integral of `g-bar` over
/// each piece.
#[derive(Debug, Clone)]
pub struct ParisiMeasure {
    spec: Mixture,
    pieces: Vec<Piece>,
    delta: f64,
    tail_right: Vec<f64>,
    i_left: Vec<f64>,
    i_end: f64,
    gbar_int: Vec<f64>,
    g_suffix: Vec<f64>,
}

/// `omega(x) = xi'''(x) / (2 xi''(x)^(3/2))`.
pub fn omega(spec: &Mixture, x: f64) -> f64 {
    0.5 * spec.d(x, 3) * spec.xi2(x).powf(-1.5)
}

impl ParisiMeasure {
    /// Builds and validates a measure.
    ///
    /// An empty piece list stands for `gamma = 0`, the replica symmetric case.
    pub fn new(spec: &Mixture, blocks: &[Block], segments: &[Segment], delta: f64) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidMeasure { reason };
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("delta must be positive, got {delta}")));
        }
        let mut pieces: Vec<Piece> = blocks
            .iter()
            .map(|&b| Piece::Block(b))
            .chain(segments.iter().map(|&s| Piece::Segment(s)))
            .collect();
        if pieces.is_empty() {
            pieces.push(Piece::Block(Block { a: 0.0, b: 1.0, m: 0.0 }));
        }
        pieces.sort_by(|p, q| p.a().total_cmp(&q.a()));
        if pieces[0].a().abs() > TILE_TOL || (pieces.last().unwrap().b() - 1.0).abs() > TILE_TOL {
            return Err(invalid("pieces must cover [0, 1)".into()));
        }
        for p in &pieces {
            if !(p.b() > p.a()) {
                return Err(invalid(format!("empty piece [{}, {})", p.a(), p.b())));
            }
            if let Piece::Block(b) = p {
                if !(b.m >= 0.0 && b.m.is_finite()) {
                    return Err(invalid(format!("negative density {}", b.m)));
                }
            }
            if let Piece::Segment(s) = p {
                if spec.xi2(s.a) <= 0.0 {
                    return Err(invalid(format!("segment starts where xi'' = 0 ({})", s.a)));
                }
            }
        }
        for w in pieces.windows(2) {
            if (w[0].b() - w[1].a()).abs() > TILE_TOL {
                return Err(invalid(format!("gap or overlap at {}", w[0].b())));
            }
        }
        // snap shared endpoints so later arithmetic sees exact abutment
        let n = pieces.len();
        for i in 0..n {
            let a = if i == 0 { 0.0 } else { pieces[i - 1].b() };
            let b = if i + 1 == n { 1.0 } else { pieces[i].b() };
            match &mut pieces[i] {
                Piece::Block(bl) => {
                    bl.a = a;
                    bl.b = b;
                }
                Piece::Segment(sg) => {
                    sg.a = a;
                    sg.b = b;
                }
            }
        }
        let mut mu = Self {
            spec: spec.clone(),
            pieces,
            delta,
            tail_right: vec![],
            i_left: vec![],
            i_end: 0.0,
            gbar_int: vec![],
            g_suffix: vec![],
        };
        if let Some(x) = mu.first_decrease() {
            return Err(invalid(format!("density decreases near {x}")));
        }
        mu.cache();
        Ok(mu)
    }

    /// Replica symmetric measure: no density, mass `delta` at 1.
    pub fn replica_symmetric(spec: &Mixture, delta: f64) -> Result<Self> {
        Self::new(spec, &[], &[], delta)
    }

    fn cache(&mut self) {
        let n = self.pieces.len();
        let mut tails = vec![0.0; n];
        let mut c = self.delta;
        for i in (0..n).rev() {
            tails[i] = c;
            c = self.tail_in(i, c, self.pieces[i].a());
        }
        self.tail_right = tails;
        let mut acc = 0.0;
        self.i_left = Vec::with_capacity(n);
        for i in 0..n {
            self.i_left.push(acc);
            acc += self.inv_sq_integral(i, self.pieces[i].a(), self.pieces[i].b());
        }
        self.i_end = acc;
        self.gbar_int = (0..n)
            .map(|i| {
                let (a, b) = (self.pieces[i].a(), self.pieces[i].b());
                self.gbar_integral(i, self.i_left[i], a, b)
            })
            .collect();
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + self.gbar_int[i];
        }
        self.g_suffix = suffix;
    }

    pub fn spec(&self) -> &Mixture {
        &self.spec
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.pieces
            .iter()
            .filter_map(|p| if let Piece::Block(b) = p { Some(*b) } else { None })
            .collect()
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.pieces
            .iter()
            .filter_map(|p| if let Piece::Segment(s) = p { Some(*s) } else { None })
            .collect()
    }

    /// Tail of piece `i` at `x`, given its value `c` at the right end.
    fn tail_in(&self, i: usize, c: f64, x: f64) -> f64 {
        match self.pieces[i] {
            Piece::Block(b) => c + b.m * (b.b - x),
            Piece::Segment(s) => c + self.spec.phi_star(x) - self.spec.phi_star(s.b),
        }
    }

    /// Whether the tail on segment `i` coincides with `xi''^(-1/2)`.
    fn segment_on_curve(&self, i: usize) -> bool {
        let s = self.pieces[i].b();
        let c = self.tail_right[i];
        (c - self.spec.phi_star(s)).abs() <= 1e-12 * c
    }

    /// `int_a^t dr / tail(r)^2` inside piece `i`.
    fn inv_sq_integral(&self, i: usize, a: f64, t: f64) -> f64 {
        let c = self.tail_right[i];
        match self.pieces[i] {
            Piece::Block(_) => {
                let pa = self.tail_in(i, c, a);
                let pt = self.tail_in(i, c, t);
                (t - a) / (pa * pt)
            }
            Piece::Segment(_) => {
                if self.segment_on_curve(i) {
                    self.spec.slope_gap(a, t)
                } else {
                    integrate(|r| self.tail_in(i, c, r).powi(-2), a, t, 1e-13)
                }
            }
        }
    }

    /// `int_a^b gbar(t) dt` inside piece `i`, where `i0` is the accumulated
    /// `int_0^a dr/tail^2`.
    fn gbar_integral(&self, i: usize, i0: f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let spec = &self.spec;
        let c = self.tail_right[i];
        let len = b - a;
        match self.pieces[i] {
            Piece::Block(bl) => {
                // int_a^b J(t) dt with J(t) = (t - a) / (phi(a) phi(t))
                let pb = self.tail_in(i, c, b);
                let m = bl.m;
                let w = m * len / pb;
                let jint = if w.abs() < 1e-3 {
                    let mut sum = 0.0;
                    let mut wp = 1.0;
                    for k in 2..12 {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        sum += sign * wp * (k as f64 - 1.0) / k as f64;
                        wp *= w;
                    }
                    len * len / (pb * pb) * sum
                } else {
                    let pa = pb + m * len;
                    ((w).ln_1p() / m - len / pa) / m
                };
                spec.xi(b) - spec.xi(a) - i0 * len - jint
            }
            Piece::Segment(_) => {
                if self.segment_on_curve(i) {
                    (spec.xi1(a) - i0) * len
                } else {
                    integrate(
                        |t| spec.xi1(t) - i0 - self.inv_sq_integral(i, a, t),
                        a,
                        b,
                        1e-13,
                    )
                }
            }
        }
    }

    fn locate(&self, x: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.b() <= x);
        idx.min(self.pieces.len() - 1)
    }

    /// `nu((x, 1])`.
    pub fn nu_tail(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::DomainError { what: "[0, 1]", value: x });
        }
        if x == 1.0 {
            return Ok(self.delta);
        }
        let i = self.locate(x);
        Ok(self.tail_in(i, self.tail_right[i], x))
    }

    /// The density `gamma(x)` (right-continuous).
    pub fn gamma(&self, x: f64) -> f64 {
        let i = self.locate(x);
        match self.pieces[i] {
            Piece::Block(b) => b.m,
            Piece::Segment(_) => omega(&self.spec, x),
        }
    }

    /// `(gbar(u), g(u))` with `gbar(u) = xi'(u) - int_0^u dr/tail^2` and
    /// `g(u) = int_u^1 gbar`.
    pub fn g_functions(&self, u: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::DomainError { what: "[0, 1]", value: u });
        }
        if u == 1.0 {
            return Ok((self.spec.xi1(1.0) - self.i_end, 0.0));
        }
        let i = self.locate(u);
        let a = self.pieces[i].a();
        let iu = self.i_left[i] + self.inv_sq_integral(i, a, u);
        let gbar = self.spec.xi1(u) - iu;
        let g = self.gbar_integral(i, iu, u, self.pieces[i].b()) + self.g_suffix[i + 1];
        Ok((gbar, g))
    }

    /// `g(u)`.
    pub fn g(&self, u: f64) -> f64 {
        self.g_functions(u).map(|v| v.1).unwrap_or(f64::NAN)
    }

    /// `xi'(1) - int_0^1 dr / tail^2`.
    pub fn cond_i_residual(&self) -> f64 {
        self.spec.xi1(1.0) - self.i_end
    }

    /// The Crisanti-Sommers value `(1/2)(int xi' dnu + int_0^1 dx / tail(x))`.
    pub fn cs_energy(&self) -> f64 {
        let spec = &self.spec;
        let mut first = spec.xi1(1.0) * self.delta;
        let mut second = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let c = self.tail_right[i];
            match *p {
                Piece::Block(b) => {
                    first += b.m * (spec.xi(b.b) - spec.xi(b.a));
                    let len = b.b - b.a;
                    second += if b.m == 0.0 { len / c } else { (b.m * len / c).ln_1p() / b.m };
                }
                Piece::Segment(s) => {
                    // int omega xi' by parts, with omega = -(xi''^(-1/2))'
                    let root = integrate(|t| spec.xi2(t).sqrt(), s.a, s.b, 1e-14);
                    first += spec.phi_star(s.a) * spec.xi1(s.a) - spec.phi_star(s.b) * spec.xi1(s.b)
                        + root;
                    if self.segment_on_curve(i) {
                        second += root;
                    } else {
                        second += integrate(|t| 1.0 / self.tail_in(i, c, t), s.a, s.b, 1e-14);
                    }
                }
            }
        }
        0.5 * (first + second)
    }

    fn first_decrease(&self) -> Option<f64> {
        let mut prev = 0.0f64;
        for p in &self.pieces {
            match *p {
                Piece::Block(b) => {
                    if b.m < prev - 1e-12 * prev.max(1.0) {
                        return Some(b.a);
                    }
                    prev = b.m;
                }
                Piece::Segment(s) => {
                    for k in 0..=32 {
                        let x = s.a + (s.b - s.a) * k as f64 / 32.0;
                        let w = omega(&self.spec, x);
                        if w < prev - 1e-9 * prev.max(1.0) {
                            return Some(x);
                        }
                        prev = prev.max(w);
                    }
                }
            }
        }
        None
    }

    /// Points where the induced measure `d gamma` has an atom, plus 1.
    ///
    /// Atoms inside or at the ends of a segment are included; see
    /// [`ParisiMeasure::isolated_support`] for the count that excludes them.
    pub fn support_atoms(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let mut prev = 0.0;
        for p in &self.pieces {
            let left = match *p {
                Piece::Block(b) => b.m,
                Piece::Segment(s) => omega(&self.spec, s.a),
            };
            if left > prev + 1e-12 {
                pts.push(p.a());
            }
            prev = match *p {
                Piece::Block(b) => b.m,
                Piece::Segment(s) => omega(&self.spec, s.b),
            };
        }
        pts.push(1.0);
        pts
    }

    /// Isolated points of the support: atoms not lying in a closed segment.
    pub fn isolated_support(&self) -> Vec<f64> {
        let segs = self.segments();
        self.support_atoms()
            .into_iter()
            .filter(|&x| !segs.iter().any(|s| x >= s.a - 1e-12 && x <= s.b + 1e-12))
            .collect()
    }

    /// Runs the optimality check.
    pub fn verify(&self, grid_size: usize, tol: &Tolerances) -> VerificationReport {
        let grid_size = grid_size.max(256);
        let mut pts: Vec<f64> = (0..=grid_size).map(|i| i as f64 / grid_size as f64).collect();
        for p in &self.pieces {
            for &knot in &[p.a(), p.b()] {
                for k in 1..=8 {
                    let d = 10f64.powi(-k);
                    pts.push((knot - d).max(0.0));
                    pts.push((knot + d).min(1.0));
                }
            }
        }
        let support = self.support_atoms();
        let mut sup_pts = support.clone();
        for s in self.segments() {
            for k in 0..=64 {
                sup_pts.push(s.a + (s.b - s.a) * k as f64 / 64.0);
            }
        }
        pts.extend(sup_pts.iter().copied());
        let mut min_g = f64::INFINITY;
        let mut min_at = 0.0;
        for &u in &pts {
            let g = self.g(u);
            if g < min_g {
                min_g = g;
                min_at = u;
            }
        }
        let g_at_support = sup_pts.iter().map(|&u| self.g(u).abs()).fold(0.0, f64::max);
        let cond = self.cond_i_residual();
        let passed = cond.abs() <= tol.cond_i && min_g >= -tol.min_g && g_at_support <= tol.support;
        VerificationReport {
            cond_i_residual: cond,
            min_g,
            min_g_at: min_at,
            g_at_support,
            passed,
            grid_size,
        }
    }

    /// Serializable form.
    pub fn to_json(&self) -> MeasureJson {
        MeasureJson {
            exponents: self.spec.exponents().to_vec(),
            weights: self.spec.weights().to_vec(),
            delta: self.delta,
            blocks: self.blocks(),
            segments: self.segments(),
        }
    }
}

/// Tolerances of the optimality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub cond_i: f64,
    pub min_g: f64,
    pub support: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { cond_i: 1e-8, min_g: 1e-8, support: 1e-8 }
    }
}

/// Result of [`verify_parisi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub cond_i_residual: f64,
    pub min_g: f64,
    pub min_g_at: f64,
    pub g_at_support: f64,
    pub passed: bool,
    pub grid_size: usize,
}

/// Checks the three optimality conditions on a grid of `grid_size + 1` points
/// refined around every knot.
pub fn verify_parisi(measure: &ParisiMeasure, grid_size: usize, tol: &Tolerances) -> VerificationReport {
    measure.verify(grid_size, tol)
}

/// On-disk measure layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub exponents: Vec<u32>,
    pub weights: Vec<f64>,
    pub delta: f64,
    #[serde(default)]
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl MeasureJson {
    /// Rebuilds the measure.
    ///
    /// Weights printed at 12 significant digits may miss the unit sum by a
    /// few ulps of the last digit, so a mismatch up to `1e-10` is absorbed by
    /// rescaling.
    pub fn into_measure(self) -> Result<ParisiMeasure> {
        let sum: f64 = self.weights.iter().sum();
        let weights: Vec<f64> = if (sum - 1.0).abs() <= 1e-10 {
            self.weights.iter().map(|w| w / sum).collect()
        } else {
            self.weights.clone()
        };
        let spec = if self.exponents.first() == Some(&2) {
            Mixture::diagnostic(&self.exponents, &weights, false)?
        } else {
            Mixture::new(&self.exponents, &weights, false)?
        };
        ParisiMeasure::new(&spec, &self.blocks, &self.segments, self.delta)
    }
}
