//! Truncated multivariate Taylor jets: polynomials in `h_1..h_N` modulo
//! `h_j^{cap+1}` for every `j`, over complex numbers.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    n_vars: usize,
    cap: u32,
    /// Mixed-radix layout: exponent of `h_j` is digit `j` in base `cap + 1`.
    coeffs: Vec<C64>,
}

impl Jet {
    pub fn zero(n_vars: usize, cap: u32) -> Self {
        let size = (cap as usize + 1).pow(n_vars as u32);
        Jet {
            n_vars,
            cap,
            coeffs: vec![C64::new(0.0, 0.0); size],
        }
    }

    pub fn constant(n_vars: usize, cap: u32, c: C64) -> Self {
        let mut j = Jet::zero(n_vars, cap);
        j.coeffs[0] = c;
        j
    }

    /// The jet of a function of `x_var` alone from its Taylor coefficients.
    pub fn univariate(n_vars: usize, cap: u32, var: usize, taylor: &[C64]) -> Self {
        let mut j = Jet::zero(n_vars, cap);
        let stride = (cap as usize + 1).pow(var as u32);
        for (r, c) in taylor.iter().enumerate().take(cap as usize + 1) {
            j.coeffs[r * stride] = *c;
        }
        j
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    fn index(&self, alpha: &[u32]) -> Option<usize> {
        let base = self.cap as usize + 1;
        let mut idx = 0;
        for j in (0..self.n_vars).rev() {
            let a = *alpha.get(j).unwrap_or(&0);
            if a > self.cap {
                return None;
            }
            idx = idx * base + a as usize;
        }
        Some(idx)
    }

    fn exponents(&self, mut idx: usize) -> Vec<u32> {
        let base = self.cap as usize + 1;
        (0..self.n_vars)
            .map(|_| {
                let d = (idx % base) as u32;
                idx /= base;
                d
            })
            .collect()
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    /// Taylor coefficient of `h^alpha`.
    pub fn coefficient(&self, alpha: &[u32]) -> Option<C64> {
        self.index(alpha).map(|i| self.coeffs[i])
    }

    /// `d^alpha f` at the expansion point, `alpha! * coefficient`.
    pub fn derivative(&self, alpha: &[u32]) -> Option<C64> {
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a).map(|t| t as f64).product::<f64>())
            .product();
        self.coefficient(alpha).map(|c| c * fact)
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet {
            n_vars: self.n_vars,
            cap: self.cap,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut out = Jet::constant(self.n_vars, self.cap, C64::new(1.0, 0.0));
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// `(f / f(0))^s` by the binomial series in the nilpotent part; requires
    /// `f(0) != 0`.
    pub fn normalized_power(&self, s: f64) -> Jet {
        let u0 = self.value();
        let mut delta = self.scale(C64::new(1.0, 0.0) / u0);
        delta.coeffs[0] = C64::new(0.0, 0.0);
        let nil = self.cap as usize * self.n_vars;
        let mut out = Jet::constant(self.n_vars, self.cap, C64::new(1.0, 0.0));
        let mut power = out.clone();
        let mut binom = 1.0;
        for k in 1..=nil {
            binom *= (s - (k - 1) as f64) / k as f64;
            power = &power * &delta;
            out = &out + &power.scale(C64::new(binom, 0.0));
        }
        out
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet {
            n_vars: self.n_vars,
            cap: self.cap,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet {
            n_vars: self.n_vars,
            cap: self.cap,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let mut out = Jet::zero(self.n_vars, self.cap);
        let nonzero: Vec<(usize, Vec<u32>)> = rhs
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(i, _)| (i, rhs.exponents(i)))
            .collect();
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.norm() == 0.0 {
                continue;
            }
            let ei = self.exponents(i);
            for (k, ek) in &nonzero {
                let sum: Vec<u32> = ei.iter().zip(ek).map(|(x, y)| x + y).collect();
                if let Some(t) = out.index(&sum) {
                    out.coeffs[t] += a * rhs.coeffs[*k];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn product_of_univariate_jets() {
        // (1 + h1)(2 + 3 h2) truncated at cap 1
        let a = Jet::univariate(2, 1, 0, &[c(1.0), c(1.0)]);
        let b = Jet::univariate(2, 1, 1, &[c(2.0), c(3.0)]);
        let p = &a * &b;
        assert_eq!(p.coefficient(&[0, 0]), Some(c(2.0)));
        assert_eq!(p.coefficient(&[1, 1]), Some(c(3.0)));
        // h1^2 is truncated away
        assert_eq!((&a * &a).coefficient(&[1, 0]), Some(c(2.0)));
    }

    #[test]
    fn normalized_power_matches_exponential_series() {
        // f = e^{h}: (f/f0)^s = e^{s h}
        let f = Jet::univariate(
            1,
            4,
            0,
            &[c(1.0), c(1.0), c(0.5), c(1.0 / 6.0), c(1.0 / 24.0)],
        );
        let g = f.normalized_power(0.7);
        for r in 0..=4u32 {
            let expected = 0.7f64.powi(r as i32);
            assert!((g.derivative(&[r]).unwrap() - expected).norm() < 1e-14);
        }
    }
}
