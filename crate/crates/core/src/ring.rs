//! Coefficient rings for the symmetric polynomial algebra.
//!
//! Three implementations: exact rationals, exact rationals extended by the
//! half-period symbols `e1, e2` (with `e3 = -e1 - e2` eliminated eagerly), and
//! complex floating point.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait Ring:
    Clone
    + PartialEq
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    fn from_rational(q: &BigRational) -> Self;
    /// A nonnegative size, zero exactly when the element is zero (up to
    /// floating underflow); used for residual reporting.
    fn magnitude(&self) -> f64;

    /// Zero up to rounding relative to `scale`; exact rings demand zero.
    fn negligible(&self, scale: f64) -> bool {
        let _ = scale;
        self.is_zero()
    }

    fn from_i64(n: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(n)))
    }
}

/// Relative size under which a floating remainder counts as cancelled.
pub const FLOAT_CANCELLATION_TOL: f64 = 1e-9;

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

impl Ring for BigRational {
    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }
    fn magnitude(&self) -> f64 {
        rational_to_f64(&self.abs())
    }
}

impl Ring for Complex64 {
    fn from_rational(q: &BigRational) -> Self {
        Complex64::new(rational_to_f64(q), 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn negligible(&self, scale: f64) -> bool {
        self.norm() <= FLOAT_CANCELLATION_TOL * scale.max(1.0)
    }
}

/// Polynomial in the symbols `e1, e2` with rational coefficients; `e3` is
/// represented as `-e1 - e2`.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct ESym {
    terms: BTreeMap<(u32, u32), BigRational>,
}

impl ESym {
    pub fn constant(q: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !Zero::is_zero(&q) {
            terms.insert((0, 0), q);
        }
        ESym { terms }
    }

    /// The symbol `e_i` for `i` in `1..=3`.
    pub fn e(i: usize) -> Self {
        let one: BigRational = One::one();
        let mut terms = BTreeMap::new();
        match i {
            1 => {
                terms.insert((1, 0), one);
            }
            2 => {
                terms.insert((0, 1), one);
            }
            3 => {
                terms.insert((1, 0), -one.clone());
                terms.insert((0, 1), -one);
            }
            _ => panic!("half-period symbol index {i} out of range 1..=3"),
        }
        ESym { terms }
    }

    /// The triple `(e1, e2, e3)` of symbols.
    pub fn triple() -> [ESym; 3] {
        [ESym::e(1), ESym::e(2), ESym::e(3)]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &BigRational)> {
        self.terms.iter()
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|(i, j)| i + j).max()
    }

    /// Substitutes values for `e1` and `e2`.
    pub fn eval<R: Ring>(&self, e1: &R, e2: &R) -> R {
        let mut total = R::zero();
        for (&(i, j), c) in &self.terms {
            let mut t = R::from_rational(c);
            for _ in 0..i {
                t = t * e1.clone();
            }
            for _ in 0..j {
                t = t * e2.clone();
            }
            total = total + t;
        }
        total
    }

    fn insert_add(&mut self, key: (u32, u32), c: BigRational) {
        let entry = self.terms.entry(key).or_insert_with(Zero::zero);
        *entry += c;
        if Zero::is_zero(entry) {
            self.terms.remove(&key);
        }
    }
}

impl fmt::Debug for ESym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(i, j), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            if i > 0 {
                write!(f, "*e1^{i}")?;
            }
            if j > 0 {
                write!(f, "*e2^{j}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for ESym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Add for ESym {
    type Output = ESym;
    fn add(mut self, rhs: ESym) -> ESym {
        for (k, c) in rhs.terms {
            self.insert_add(k, c);
        }
        self
    }
}

impl Sub for ESym {
    type Output = ESym;
    fn sub(mut self, rhs: ESym) -> ESym {
        for (k, c) in rhs.terms {
            self.insert_add(k, -c);
        }
        self
    }
}

impl Neg for ESym {
    type Output = ESym;
    fn neg(mut self) -> ESym {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Mul for ESym {
    type Output = ESym;
    fn mul(self, rhs: ESym) -> ESym {
        let mut out = ESym::default();
        for (&(i, j), c) in &self.terms {
            for (&(k, l), d) in &rhs.terms {
                out.insert_add((i + k, j + l), c * d);
            }
        }
        out
    }
}

impl Zero for ESym {
    fn zero() -> Self {
        ESym::default()
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for ESym {
    fn one() -> Self {
        ESym::constant(One::one())
    }
}

impl Ring for ESym {
    fn from_rational(q: &BigRational) -> Self {
        ESym::constant(q.clone())
    }
    fn magnitude(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rational_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e3_is_eliminated() {
        let [e1, e2, e3] = ESym::triple();
        assert!((e1 + e2 + e3).is_zero());
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism() {
        let [e1, e2, e3] = ESym::triple();
        let x = (e1.clone() * e2.clone() - e3.clone() * e3) * (e1 + ESym::from_i64(3));
        let a = rational(2, 3);
        let b = rational(-5, 7);
        let c = -a.clone() - b.clone();
        let direct = (a.clone() * b.clone() - c.clone() * c) * (a.clone() + rational(3, 1));
        assert_eq!(x.eval(&a, &b), direct);
    }

    #[test]
    fn complex_magnitude_is_modulus() {
        assert_eq!(Complex64::new(3.0, 4.0).magnitude(), 5.0);
    }
}
