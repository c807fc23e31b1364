//! Minimal double-double arithmetic (unevaluated sum `hi + lo`) used to
//! evaluate eigen-residuals well below `f64` round-off.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// `a * b` for plain doubles, exact.
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let e = e + self.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    /// `e^x - 1` for `|x| <= 1`, by Taylor series in double-double.
    pub fn exp_m1(x: f64) -> Self {
        debug_assert!(x.abs() <= 1.0);
        let mut term = Dd::from_f64(x);
        let mut sum = term;
        for k in 2..40 {
            term = term.mul_f64(x);
            term = term.div_f64(k as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-34 * sum.hi.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        sum
    }

    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let r = self - Dd::prod(q1, b);
        let q2 = r.hi / b;
        let r = r - Dd::prod(q2, b);
        let q3 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add_f64(q3)
    }
}

impl Add for Dd {
    type Output = Dd;

    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let e = e + t;
        let (s, e) = quick_two_sum(s, e);
        let e = e + f;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;

    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;

    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_are_exact() {
        let a = 1.0 + f64::EPSILON;
        let p = Dd::prod(a, a);
        // (1 + e)^2 = 1 + 2e + e^2; e^2 survives in lo
        assert_eq!(p.hi, 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(p.lo, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn cancellation_keeps_low_bits() {
        let x = Dd::from_f64(1.0).add_f64(1e-20);
        let y = x - Dd::from_f64(1.0);
        assert!((y.to_f64() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn exp_m1_matches_libm_and_beats_it_in_low_part() {
        for &x in &[1e-8, -3e-3, 0.02, -0.25, 0.5] {
            let d = Dd::exp_m1(x);
            assert!((d.hi - x.exp_m1()).abs() <= 2.0 * f64::EPSILON * x.exp_m1().abs());
            // exp(x) * exp(-x) = 1 to double-double accuracy
            let e = Dd::from_f64(1.0) + d;
            let f = Dd::from_f64(1.0) + Dd::exp_m1(-x);
            let one = e * f - Dd::from_f64(1.0);
            assert!(one.to_f64().abs() < 1e-30, "x = {x}: {}", one.to_f64());
        }
    }

    #[test]
    fn division_round_trips() {
        let a = Dd::from_f64(1.0).div_f64(3.0);
        let back = a.mul_f64(3.0) - Dd::from_f64(1.0);
        assert!(back.to_f64().abs() < 1e-31);
    }
}
