//! The mixture polynomial `xi(x) = sum_j lambda_j x^p_j` and its derivatives.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on the weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A validated mixture: strictly increasing integer exponents with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec<T> {
    exponents: Vec<u32>,
    weights: Vec<T>,
    diagnostic: bool,
}

impl<T: Real> MixtureSpec<T> {
    /// Builds a mixture. Every exponent must be at least 3.
    ///
    /// With `derive_last` the caller passes `n - 1` weights and the last one is
    /// set to one minus their sum.
    pub fn new(exponents: &[u32], weights: &[T], derive_last: bool) -> Result<Self> {
        Self::build(exponents, weights, derive_last, 3)
    }

    /// Like [`MixtureSpec::new`] but also accepts the exponent 2.
    ///
    /// Pure 2-spin has a closed-form answer, which makes it a handy sanity
    /// point for the oracle and the verifier. It is outside the supported
    /// model class otherwise.
    pub fn diagnostic(exponents: &[u32], weights: &[T], derive_last: bool) -> Result<Self> {
        let mut spec = Self::build(exponents, weights, derive_last, 2)?;
        spec.diagnostic = true;
        Ok(spec)
    }

    fn build(exponents: &[u32], weights: &[T], derive_last: bool, min_p: u32) -> Result<Self> {
        if exponents.is_empty()
            || exponents[0] < min_p
            || exponents.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::NonIncreasingExponents { min: min_p });
        }
        let expected = if derive_last { exponents.len() - 1 } else { exponents.len() };
        if weights.len() != expected {
            return Err(Error::WeightSumMismatch {
                sum: weights.iter().map(|w| w.to_f64_lossy()).sum(),
            });
        }
        for (index, w) in weights.iter().enumerate() {
            let v = w.to_f64_lossy();
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::WeightOutOfRange { index, value: v });
            }
        }
        let mut weights = weights.to_vec();
        let sum = weights.iter().fold(T::zero(), |a, &b| a + b);
        let tol = T::lit(WEIGHT_SUM_TOL).max(T::epsilon() * T::lit(8.0));
        if derive_last {
            let last = T::one() - sum;
            if last < -tol {
                return Err(Error::WeightOutOfRange {
                    index: exponents.len() - 1,
                    value: last.to_f64_lossy(),
                });
            }
            weights.push(last.max(T::zero()));
        } else if (sum - T::one()).abs() > tol {
            return Err(Error::WeightSumMismatch { sum: sum.to_f64_lossy() });
        }
        Ok(Self { exponents: exponents.to_vec(), weights, diagnostic: false })
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Number of components.
    pub fn n(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_diagnostic(&self) -> bool {
        self.diagnostic
    }

    /// Converts the weights to another scalar type.
    pub fn cast<U: Real>(&self) -> MixtureSpec<U> {
        MixtureSpec {
            exponents: self.exponents.clone(),
            weights: self.weights.iter().map(|w| U::lit(w.to_f64_lossy())).collect(),
            diagnostic: self.diagnostic,
        }
    }

    /// Checked derivative of order `0..=4` at `x` in `[0, 1]`.
    pub fn xi_deriv(&self, x: T, order: u32) -> Result<T> {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::DomainError { what: "[0, 1]", value: x.to_f64_lossy() });
        }
        if order > 4 {
            return Err(Error::DomainError { what: "order 0..=4", value: order as f64 });
        }
        Ok(self.d(x, order))
    }

    /// Unchecked derivative of any order.
    ///
    /// Terms are summed by ascending exponent with Kahan compensation.
    pub fn d(&self, x: T, order: u32) -> T {
        let mut sum = T::zero();
        let mut comp = T::zero();
        for (&p, &lam) in self.exponents.iter().zip(&self.weights) {
            if p < order {
                continue;
            }
            let mut c = lam;
            for j in 0..order {
                c = c * T::lit((p - j) as f64);
            }
            let term = c * powu(x, p - order) - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
        }
        sum
    }

    pub fn xi(&self, x: T) -> T {
        self.d(x, 0)
    }

    pub fn xi1(&self, x: T) -> T {
        self.d(x, 1)
    }

    pub fn xi2(&self, x: T) -> T {
        self.d(x, 2)
    }

    /// `xi(y) - xi(x) - xi'(x) (y - x)`, evaluated without the cancellation of
    /// the naive form when `y` is close to `x`.
    pub fn bregman(&self, x: T, y: T) -> T {
        self.exponents
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&p, &lam)| acc + lam * mono_bregman(p, x, y))
    }

    /// `xi'(y) - xi'(x)`, evaluated stably.
    pub fn slope_gap(&self, x: T, y: T) -> T {
        self.exponents.iter().zip(&self.weights).fold(T::zero(), |acc, (&p, &lam)| {
            acc + lam * T::lit(p as f64) * mono_gap(p - 1, x, y)
        })
    }

    /// `xi''(x)^(-1/2)`, the tail of the measure on a full-RSB segment.
    pub fn phi_star(&self, x: T) -> T {
        self.xi2(x).sqrt().recip()
    }

    /// Second derivative of `xi''^(-1/2)`:
    /// `(1/4) xi''^(-5/2) (3 xi'''^2 - 2 xi'' xi'''')`.
    pub fn phi_star_curvature(&self, x: T) -> Result<T> {
        if !(x > T::zero() && x <= T::one()) {
            return Err(Error::DomainError { what: "(0, 1]", value: x.to_f64_lossy() });
        }
        let d2 = self.d(x, 2);
        if d2 <= T::zero() {
            return Err(Error::SingularCurvature { x: x.to_f64_lossy() });
        }
        let num = self.curvature_numerator(x);
        Ok(T::lit(0.25) * d2.powf(T::lit(-2.5)) * num)
    }

    /// `3 xi'''^2 - 2 xi'' xi''''`, which carries the sign of the curvature.
    pub fn curvature_numerator(&self, x: T) -> T {
        let d2 = self.d(x, 2);
        let d3 = self.d(x, 3);
        let d4 = self.d(x, 4);
        T::lit(3.0) * d3 * d3 - T::lit(2.0) * d2 * d4
    }

    /// Counts strict sign changes of the curvature on a uniform grid of `(0, 1]`.
    ///
    /// Points where the numerator underflows to zero are skipped.
    pub fn curvature_sign_changes(&self, points: usize) -> usize {
        let mut last = 0i8;
        let mut changes = 0;
        for i in 1..=points {
            let x = T::lit(i as f64 / points as f64);
            let v = self.curvature_numerator(x);
            let s = if v > T::zero() {
                1
            } else if v < T::zero() {
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    changes += 1;
                }
                last = s;
            }
        }
        changes
    }
}

/// `x^k` by repeated squaring.
pub(crate) fn powu<T: Real>(x: T, k: u32) -> T {
    if k <= i32::MAX as u32 {
        x.powi(k as i32)
    } else {
        x.powf(T::lit(k as f64))
    }
}

/// `y^q - x^q`.
fn mono_gap<T: Real>(q: u32, x: T, y: T) -> T {
    if q == 0 {
        return T::zero();
    }
    if x <= T::zero() {
        return powu(y, q);
    }
    let t = (y - x) / x;
    if t >= T::one() {
        // far apart: no cancellation, and x^q may underflow
        return powu(y, q) - powu(x, q);
    }
    powu(x, q) * (T::lit(q as f64) * t.ln_1p()).exp_m1()
}

/// `y^p - x^p - p x^(p-1) (y - x)`.
fn mono_bregman<T: Real>(p: u32, x: T, y: T) -> T {
    if x <= T::zero() {
        return powu(y, p);
    }
    let t = (y - x) / x;
    let pf = T::lit(p as f64);
    if t >= T::one() {
        return powu(y, p) - powu(x, p) - pf * powu(x, p - 1) * (y - x);
    }
    if (pf * t).abs() < T::lit(0.5) {
        // binomial series from the quadratic term on
        let mut c = pf * (pf - T::one()) / T::lit(2.0) * t * t;
        let mut sum = T::zero();
        let mut j = 2u32;
        while j <= p {
            sum = sum + c;
            if c.abs() <= T::epsilon() * sum.abs() {
                break;
            }
            c = c * T::lit((p - j) as f64) / T::lit((j + 1) as f64) * t;
            j += 1;
        }
        powu(x, p) * sum
    } else {
        powu(x, p) * ((pf * t.ln_1p()).exp_m1() - pf * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex2() -> MixtureSpec<f64> {
        MixtureSpec::new(&[4, 28, 84], &[0.88, 0.1118], true).unwrap()
    }

    #[test]
    fn derives_last_weight() {
        let m = ex2();
        assert_relative_eq!(m.weights()[2], 0.0082, epsilon = 1e-15);
    }

    #[test]
    fn rejects_negative_residual() {
        let e = MixtureSpec::<f64>::new(&[4, 28, 84], &[0.88, 0.13], true).unwrap_err();
        assert!(matches!(e, Error::WeightOutOfRange { index: 2, .. }));
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(MixtureSpec::<f64>::new(&[4, 4], &[0.5, 0.5], false).is_err());
        assert!(MixtureSpec::<f64>::new(&[2], &[1.0], false).is_err());
        assert!(MixtureSpec::<f64>::diagnostic(&[2], &[1.0], false).is_ok());
        assert!(MixtureSpec::<f64>::new(&[], &[], false).is_err());
    }

    #[test]
    fn rejects_sum_mismatch() {
        let e = MixtureSpec::<f64>::new(&[4, 28], &[0.5, 0.6], false).unwrap_err();
        assert!(matches!(e, Error::WeightSumMismatch { .. }));
    }

    #[test]
    fn derivative_values() {
        let m = ex2();
        assert_relative_eq!(m.xi_deriv(1.0, 0).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.xi_deriv(1.0, 1).unwrap(), 7.3392, epsilon = 1e-12);
        let p3 = MixtureSpec::new(&[3], &[1.0], false).unwrap();
        assert_eq!(p3.xi_deriv(1.0, 2).unwrap(), 6.0);
        assert_eq!(p3.xi_deriv(0.5, 4).unwrap(), 0.0);
        assert!(p3.xi_deriv(1.5, 0).is_err());
        assert!(p3.xi_deriv(0.5, 5).is_err());
    }

    #[test]
    fn bregman_matches_naive_far_from_diagonal() {
        let m = ex2();
        for &(x, y) in &[(0.2, 0.9), (0.9, 0.2), (0.0, 0.7), (0.5, 0.51), (0.97, 1.0)] {
            let naive = m.xi(y) - m.xi(x) - m.xi1(x) * (y - x);
            assert_relative_eq!(m.bregman(x, y), naive, max_relative = 1e-9, epsilon = 1e-15);
            let gap = m.xi1(y) - m.xi1(x);
            assert_relative_eq!(m.slope_gap(x, y), gap, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn bregman_is_second_order_near_diagonal() {
        let m = ex2();
        let x = 0.97;
        let d = 1e-6;
        let approx = 0.5 * m.xi2(x) * d * d;
        assert_relative_eq!(m.bregman(x, x + d), approx, max_relative = 1e-4);
    }

    #[test]
    fn pure_two_spin_has_flat_curvature() {
        let m = MixtureSpec::<f64>::diagnostic(&[2], &[1.0], false).unwrap();
        for &x in &[0.1, 0.5, 1.0] {
            assert_eq!(m.phi_star_curvature(x).unwrap(), 0.0);
        }
    }

    #[test]
    fn curvature_rejects_zero_second_derivative() {
        let m = MixtureSpec::<f64>::new(&[3], &[1.0], false).unwrap();
        assert!(m.phi_star_curvature(0.0).is_err());
    }

    #[test]
    fn single_precision_works() {
        let m = MixtureSpec::<f32>::new(&[3], &[1.0], false).unwrap();
        assert_eq!(m.xi2(1.0), 6.0);
    }
}
