//! Scalar kernels `h`, `r1`, `r2`, the chain functionals `F`, `A`, `Z`, `Y`
//! and the boundary functions used to locate extremal chains.

use crate::error::{Error, Result};
use crate::mixture::MixtureSpec;
use crate::scalar::Real;

/// Below this distance from 1 the bracket of `h` is evaluated by its series.
pub const SERIES_RADIUS: f64 = 0.25;

/// Terms kept in that series; `0.25^48` is far below `f64` epsilon.
const SERIES_TERMS: usize = 48;

/// Third argument of [`h_arg`]: a positive value or one of the analytic limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZArg<T> {
    Value(T),
    Zero,
    One,
    Infinity,
}

/// `1/(z-1) - z ln z / (z-1)^2`, extended by its limits at `0`, `1` and `inf`.
///
/// Near `z = 1` the direct form cancels badly (it loses about `1/|u|` in
/// relative precision), so it switches to the series
/// `-1/2 + u/6 - u^2/12 + u^3/20 - u^4/30 + ...` with `u = z - 1`, whose
/// general coefficient is `(-1)^(j+1) / ((j+1)(j+2))`.
pub fn bracket<T: Real>(z: T) -> T {
    if z == T::zero() {
        return -T::one();
    }
    if z.is_infinite() {
        return T::zero();
    }
    let u = z - T::one();
    if u.abs() < T::lit(SERIES_RADIUS) {
        return (0..SERIES_TERMS).rev().fold(T::zero(), |acc, j| {
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            acc * u + T::lit(sign / ((j + 1) * (j + 2)) as f64)
        });
    }
    u.recip() - z * u.ln_1p() / (u * u)
}

/// The kernel `h(x, y, z)` for a finite positive `z`.
///
/// `z = +inf` is accepted and means the limit.
pub fn h<T: Real>(spec: &MixtureSpec<T>, x: T, y: T, z: T) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::NonpositiveZ { z: z.to_f64_lossy() });
    }
    Ok(h_ext(spec, x, y, z))
}

/// `h` with an explicit limit tag.
pub fn h_arg<T: Real>(spec: &MixtureSpec<T>, x: T, y: T, z: ZArg<T>) -> Result<T> {
    match z {
        ZArg::Value(v) => h(spec, x, y, v),
        ZArg::Zero => Ok(h_ext(spec, x, y, T::zero())),
        ZArg::One => Ok(h_ext(spec, x, y, T::one())),
        ZArg::Infinity => Ok(h_ext(spec, x, y, T::infinity())),
    }
}

/// `h` where `z = 0` and `z = inf` stand for the one-sided limits.
pub(crate) fn h_ext<T: Real>(spec: &MixtureSpec<T>, x: T, y: T, z: T) -> T {
    if x == y {
        return T::zero();
    }
    spec.bregman(x, y) + spec.slope_gap(x, y) * (y - x) * bracket(z)
}

/// `D(x, y) = (y - x) / (xi'(y) - xi'(x))`, equal to `1/xi''(x)` on the diagonal.
pub fn dratio<T: Real>(spec: &MixtureSpec<T>, x: T, y: T) -> T {
    if x == y {
        return spec.xi2(x).recip();
    }
    (y - x) / spec.slope_gap(x, y)
}

/// `r2(x, y) = xi''(y) (y - x) / (xi'(y) - xi'(x))`, with `r2(x, x) = 1`.
pub fn r2<T: Real>(spec: &MixtureSpec<T>, x: T, y: T) -> T {
    if x == y {
        return T::one();
    }
    let d2 = spec.xi2(y);
    if d2 == T::zero() {
        return T::zero();
    }
    d2 * dratio(spec, x, y)
}

/// `r1(x, y, z) = (xi'(z) - xi'(y)) (z - x) / ((z - y)(xi'(z) - xi'(x)))`.
///
/// At `z = y` this is `r2(x, y)`.
pub fn r1<T: Real>(spec: &MixtureSpec<T>, x: T, y: T, z: T) -> Result<T> {
    if x == y && y == z {
        return Err(Error::DegenerateArguments {
            x: x.to_f64_lossy(),
            y: y.to_f64_lossy(),
            z: z.to_f64_lossy(),
        });
    }
    if y == z {
        return Ok(r2(spec, x, y));
    }
    let num = dratio(spec, x, z);
    let den = dratio(spec, y, z);
    let v = num / den;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DegenerateArguments {
            x: x.to_f64_lossy(),
            y: y.to_f64_lossy(),
            z: z.to_f64_lossy(),
        })
    }
}

/// `h(x, y, r2(x, y))`, with the `z -> 0` limit when `r2` vanishes.
pub fn hf<T: Real>(spec: &MixtureSpec<T>, x: T, y: T) -> T {
    h_ext(spec, x, y, r2(spec, x, y))
}

/// An ordered tuple `(x_0, ..., x_s)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain<T> {
    values: Vec<T>,
}

impl<T: Real> Chain<T> {
    /// Accepts any nondecreasing tuple in `[0, 1]` with at least two entries.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DomainError { what: "chain length >= 2", value: values.len() as f64 });
        }
        for &v in &values {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::DomainError { what: "[0, 1]", value: v.to_f64_lossy() });
            }
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::ChainNotStrict { index: i });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn s(&self) -> usize {
        self.values.len() - 1
    }

    /// First index `i` with `x_i = x_{i+1}`, if any.
    pub fn first_tie(&self) -> Option<usize> {
        self.values.windows(2).position(|w| w[0] >= w[1])
    }
}

impl<T> std::ops::Index<usize> for Chain<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// `F_l`, `A_l`, `Z` and `Y` of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile<T> {
    /// `F_l` for `l = 0..=s`.
    pub f: Vec<T>,
    /// `A_l` for `l = 1..s`, stored at index `l - 1`.
    pub a: Vec<T>,
    pub z: T,
    pub y: T,
}

impl<T: Real> KernelProfile<T> {
    pub fn s(&self) -> usize {
        self.f.len() - 1
    }

    /// `A_l`, for `1 <= l < s`.
    pub fn a_at(&self, l: usize) -> T {
        self.a[l - 1]
    }

    /// Which entry attains `Z`: `('F', l)` or `('A', l)`.
    pub fn z_argmax(&self) -> (char, usize) {
        self.argmax(1)
    }

    /// Which entry attains `Y`.
    pub fn y_argmax(&self) -> (char, usize) {
        self.argmax(0)
    }

    fn argmax(&self, f_parity: usize) -> (char, usize) {
        let s = self.s();
        let mut best = (T::neg_infinity(), ('F', 0));
        for l in 0..=s {
            if (s - l) % 2 == f_parity && self.f[l] > best.0 {
                best = (self.f[l], ('F', l));
            }
        }
        for l in 1..s {
            if (s - l) % 2 != f_parity && self.a_at(l) > best.0 {
                best = (self.a_at(l), ('A', l));
            }
        }
        best.1
    }
}

/// `r1(x_{l-1}, x_{l+1}, x_l)`; the ratio `D(x_{l-1}, x_l) / D(x_{l+1}, x_l)`.
pub fn bold_r<T: Real>(spec: &MixtureSpec<T>, x: &[T], l: usize) -> T {
    dratio(spec, x[l - 1], x[l]) / dratio(spec, x[l + 1], x[l])
}

fn signed_pow<T: Real>(v: T, even: bool) -> T {
    if even {
        v
    } else {
        v.recip()
    }
}

/// Computes every `F_l` and `A_l` of a strictly increasing chain.
///
/// For `l = 0` with `s` even the product as written runs into `r_0`, which does
/// not exist. The leading pair is then read as `r2(x_1, x_0) r_1`, which keeps
/// the identity `xi''(x_l) phi_l^2 = F_l rho^(-(-1)^(s-l))` for the tail ratios.
pub fn chain_profile<T: Real>(spec: &MixtureSpec<T>, chain: &Chain<T>) -> Result<KernelProfile<T>> {
    if let Some(index) = chain.first_tie() {
        return Err(Error::ChainNotStrict { index });
    }
    let x = chain.values();
    let s = chain.s();
    let mut f = Vec::with_capacity(s + 1);
    for l in 0..=s {
        let even = (s - l).is_multiple_of(2);
        let n = (s - l - (s - l) % 2) / 2;
        let v = if l == 0 && even && s > 0 {
            let mut v = r2(spec, x[1], x[0]) * bold_r(spec, x, 1);
            for i in 1..n {
                v = v * bold_r(spec, x, s + 1 - 2 * i) / bold_r(spec, x, s - 2 * i);
            }
            v
        } else {
            let mut v = if even { r2(spec, x[l - 1], x[l]) } else { r2(spec, x[l + 1], x[l]) };
            for i in 1..=n {
                let ratio = bold_r(spec, x, s + 1 - 2 * i) / bold_r(spec, x, s - 2 * i);
                v = v * signed_pow(ratio, even);
            }
            v
        };
        f.push(v);
    }
    let mut a = Vec::with_capacity(s.saturating_sub(1));
    for l in 1..s {
        let even = (s - l).is_multiple_of(2);
        let n = (s - l - (s - l) % 2) / 2;
        let (lo, hi) = if even { (x[l - 1], x[l + 1]) } else { (x[l + 1], x[l - 1]) };
        let mut v = r1(spec, x[l], lo, hi)?;
        for i in 1..=n {
            let ratio = bold_r(spec, x, s - 2 * i) / bold_r(spec, x, s + 1 - 2 * i);
            v = v * signed_pow(ratio, even);
        }
        a.push(v);
    }
    let mut z = T::zero();
    let mut y = T::zero();
    for l in 0..=s {
        if (s - l) % 2 == 1 {
            z = z.max(f[l]);
        } else {
            y = y.max(f[l]);
        }
    }
    for l in 1..s {
        if (s - l).is_multiple_of(2) {
            z = z.max(a[l - 1]);
        } else {
            y = y.max(a[l - 1]);
        }
    }
    Ok(KernelProfile { f, a, z, y })
}

/// The six boundary functions on the chain `(0, x1, x2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HBar {
    H1L,
    H1U,
    H2L,
    H2U,
    H3L,
    H3U,
}

impl HBar {
    pub const ALL: [HBar; 6] = [HBar::H1L, HBar::H1U, HBar::H2L, HBar::H2U, HBar::H3L, HBar::H3U];

    pub fn name(self) -> &'static str {
        match self {
            HBar::H1L => "h1L",
            HBar::H1U => "h1U",
            HBar::H2L => "h2L",
            HBar::H2U => "h2U",
            HBar::H3L => "h3L",
            HBar::H3U => "h3U",
        }
    }
}

impl std::str::FromStr for HBar {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        HBar::ALL
            .iter()
            .copied()
            .find(|w| w.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown boundary function {s}"))
    }
}

/// Evaluates a boundary function. `h1L` ignores `x2` and `h3U` ignores `x1`.
///
/// The bold `r` factors are read on the chain `(0, x1, x2, 1)`:
///
/// * `h1L = h(0, x1, r2(0, x1))`
/// * `h1U = h(0, x1, r1(0, x2, x1) / r2(x1, x2))`
/// * `h2L = h(x1, x2, 1 / r2(x2, x1))`
/// * `h2U = h(x1, x2, r2(x1, x2))`
/// * `h3L = h(x2, 1, r2(x2, x1) r1(x1, 1, x2))`
/// * `h3U = h(x2, 1, 1 / r2(1, x2))`
///
/// This reading reproduces every corner sign in the worked three-component
/// examples.
pub fn hbar<T: Real>(spec: &MixtureSpec<T>, which: HBar, x1: T, x2: T) -> Result<T> {
    let zero = T::zero();
    let one = T::one();
    let needs_pair = !matches!(which, HBar::H1L | HBar::H3U);
    if needs_pair && !(x1 < x2) {
        return Err(Error::ArgumentOrder { x1: x1.to_f64_lossy(), x2: x2.to_f64_lossy() });
    }
    let v = match which {
        HBar::H1L => h_ext(spec, zero, x1, r2(spec, zero, x1)),
        HBar::H1U => {
            let z = r1(spec, zero, x2, x1)? / r2(spec, x1, x2);
            h_ext(spec, zero, x1, z)
        }
        HBar::H2L => h_ext(spec, x1, x2, r2(spec, x2, x1).recip()),
        HBar::H2U => h_ext(spec, x1, x2, r2(spec, x1, x2)),
        HBar::H3L => {
            let z = r2(spec, x2, x1) * r1(spec, x1, one, x2)?;
            h_ext(spec, x2, one, z)
        }
        HBar::H3U => h_ext(spec, x2, one, r2(spec, one, x2).recip()),
    };
    Ok(v)
}
