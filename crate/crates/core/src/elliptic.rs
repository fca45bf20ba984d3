//! Weierstrass and Jacobi theta functions for the lattice `Z + tau Z`.
//!
//! The Weierstrass function is evaluated by its trigonometric nome expansion
//! after reducing the argument to the fundamental cell; the theta functions
//! by their defining Fourier series. Both series are summed adaptively with
//! a geometric (respectively Gaussian) tail majorant.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{QesError, Result};

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default truncation order of every series.
pub const DEFAULT_SERIES_TERMS: usize = 64;
/// Default target absolute accuracy.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Arithmetic context of every elliptic evaluation: periods `(1, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticParams {
    pub tau: C64,
    pub nome_p: C64,
    /// Half-period values `e_i = wp(omega_i)`, `i = 1, 2, 3`.
    pub e: [C64; 3],
    pub g2: C64,
    pub g3: C64,
    pub series_terms: usize,
    pub tol: f64,
}

impl EllipticParams {
    pub fn new(tau: C64) -> Result<Self> {
        Self::with_options(tau, DEFAULT_SERIES_TERMS, DEFAULT_TOL)
    }

    /// Parameters for a real nome `p` in `(0, 1)`, i.e. purely imaginary `tau`.
    pub fn from_real_nome(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(QesError::InvalidParameter(format!(
                "real nome must lie in (0, 1), got {p}"
            )));
        }
        Self::new(C64::new(0.0, -p.ln() / PI))
    }

    pub fn with_options(tau: C64, series_terms: usize, tol: f64) -> Result<Self> {
        if tau.im <= 0.0 || !tau.is_finite() {
            return Err(QesError::InvalidParameter(format!(
                "tau must lie in the upper half plane, got {tau}"
            )));
        }
        if series_terms == 0 || !(tol > 0.0) {
            return Err(QesError::InvalidParameter(
                "series_terms and tol must be positive".into(),
            ));
        }
        let nome_p = (I * PI * tau).exp();
        let mut params = EllipticParams {
            tau,
            nome_p,
            e: [C64::new(0.0, 0.0); 3],
            g2: C64::new(0.0, 0.0),
            g3: C64::new(0.0, 0.0),
            series_terms,
            tol,
        };
        params.e = params.half_period_values()?;
        let [e1, e2, e3] = params.e;
        params.g2 = -4.0 * (e1 * e2 + e2 * e3 + e3 * e1);
        params.g3 = 4.0 * e1 * e2 * e3;
        Ok(params)
    }

    /// Half periods `omega_0 = 0, omega_1 = 1/2, omega_2 = -(1 + tau)/2, omega_3 = tau/2`.
    pub fn half_period(&self, i: usize) -> C64 {
        match i {
            0 => C64::new(0.0, 0.0),
            1 => C64::new(0.5, 0.0),
            2 => -(1.0 + self.tau) / 2.0,
            3 => self.tau / 2.0,
            _ => panic!("half period index {i} out of range 0..=3"),
        }
    }

    /// Radius around lattice points inside which evaluation is refused.
    pub fn pole_radius(&self) -> f64 {
        self.tol.sqrt()
    }

    fn half_period_values(&self) -> Result<[C64; 3]> {
        let p = self.nome_p;
        let pi2 = PI * PI;
        let mut s1 = C64::new(0.0, 0.0);
        let mut s2 = C64::new(0.0, 0.0);
        let mut s3 = C64::new(0.0, 0.0);
        let ap = p.norm();
        let mut pn = C64::new(1.0, 0.0);
        let mut converged = false;
        for n in 1..=self.series_terms {
            pn *= p;
            let nf = n as f64;
            let p2n = pn * pn;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            // e1: 2pi^2/3 - 8pi^2 sum n p^2n/(1-p^2n) ((-1)^n - 1)
            s1 += nf * p2n / (1.0 - p2n) * (sign - 1.0);
            s2 += nf * pn * (sign - pn) / (1.0 - p2n);
            s3 += nf * pn / (1.0 + pn);
            let tail = geometric_tail(nf, ap, 1.0) * 4.0 / (1.0 - ap * ap);
            if 8.0 * pi2 * tail < self.tol * 1e-3 {
                converged = true;
                break;
            }
        }
        if !converged {
            let n = self.series_terms as f64;
            return Err(QesError::SeriesNotConverged {
                terms: self.series_terms,
                tail: 8.0 * pi2 * geometric_tail(n, ap, 1.0),
                tol: self.tol,
            });
        }
        let e1 = C64::new(2.0 * pi2 / 3.0, 0.0) - 8.0 * pi2 * s1;
        let e2 = C64::new(-pi2 / 3.0, 0.0) - 8.0 * pi2 * s2;
        let e3 = C64::new(-pi2 / 3.0, 0.0) - 8.0 * pi2 * s3;
        Ok([e1, e2, e3])
    }

    /// Reduces `x` modulo the lattice into `|Im x| <= Im tau / 2`, `|Re x| <= 1/2 + |Re tau|/2`.
    pub fn reduce(&self, x: C64) -> C64 {
        let n = (x.im / self.tau.im).round();
        let y = x - n * self.tau;
        let m = y.re.round();
        y - m
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn lattice_distance(&self, x: C64) -> f64 {
        let y = self.reduce(x);
        let mut best = f64::INFINITY;
        for m in -1..=1 {
            for n in -1..=1 {
                let w = C64::new(m as f64, 0.0) + (n as f64) * self.tau;
                best = best.min((y - w).norm());
            }
        }
        best
    }

    fn check_pole(&self, x: C64) -> Result<C64> {
        let radius = self.pole_radius();
        if self.lattice_distance(x) < radius {
            return Err(QesError::PoleProximity {
                arg: format!("{x}"),
                radius,
            });
        }
        Ok(self.reduce(x))
    }

    /// `wp(x | 1, tau)` by the nome expansion on the reduced cell.
    pub fn wp(&self, x: C64) -> Result<C64> {
        let y = self.check_pole(x)?;
        let pi2 = PI * PI;
        let s = (PI * y).sin();
        let lead = pi2 / (s * s) - pi2 / 3.0;
        let series = self.nome_sum(y, |n, p2n, arg| n * p2n / (1.0 - p2n) * (arg.cos() - 1.0))?;
        Ok(lead - 8.0 * pi2 * series)
    }

    /// `wp'(x)` by the term-wise differentiated nome expansion.
    pub fn wp_prime(&self, x: C64) -> Result<C64> {
        let y = self.check_pole(x)?;
        let pi3 = PI * PI * PI;
        let s = (PI * y).sin();
        let c = (PI * y).cos();
        let lead = -2.0 * pi3 * c / (s * s * s);
        let series = self.nome_sum(y, |n, p2n, arg| n * n * p2n / (1.0 - p2n) * arg.sin())?;
        Ok(lead + 16.0 * pi3 * series)
    }

    /// `wp''(x) = 6 wp(x)^2 - g2/2`.
    pub fn wp_second(&self, x: C64) -> Result<C64> {
        let w = self.wp(x)?;
        Ok(6.0 * w * w - self.g2 / 2.0)
    }

    /// Sums `f(n, p^{2n}, 2 n pi y)` over `n >= 1` for a reduced argument `y`.
    fn nome_sum<F>(&self, y: C64, f: F) -> Result<C64>
    where
        F: Fn(f64, C64, C64) -> C64,
    {
        let p = self.nome_p;
        let p2 = p * p;
        // |p|^2 e^{2 pi |Im y|} bounds the growth ratio of the terms.
        let ratio = p2.norm() * (2.0 * PI * y.im.abs()).exp();
        let damp = 1.0 / (1.0 - p2.norm());
        let mut p2n = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..=self.series_terms {
            p2n *= p2;
            let nf = n as f64;
            acc += f(nf, p2n, 2.0 * nf * PI * y);
            let tail = 8.0 * PI.powi(3) * geometric_tail(nf, ratio, 2.0) * 2.0 * damp;
            if tail < self.tol * 1e-3 {
                return Ok(acc);
            }
        }
        let nf = self.series_terms as f64;
        Err(QesError::SeriesNotConverged {
            terms: self.series_terms,
            tail: 16.0 * PI.powi(3) * geometric_tail(nf, ratio, 2.0) * damp,
            tol: self.tol,
        })
    }

    /// Taylor coefficients `c_0..=c_order` of `wp(x + t) = sum c_n t^n`.
    ///
    /// Higher coefficients follow from `wp'' = 6 wp^2 - g2/2`.
    pub fn wp_taylor(&self, x: C64, order: usize) -> Result<Vec<C64>> {
        let w = self.wp(x)?;
        let mut c = vec![C64::new(0.0, 0.0); order + 1];
        c[0] = w;
        if order >= 1 {
            c[1] = self.wp_prime(x)?;
        }
        for n in 0..order.saturating_sub(1) {
            let mut conv = C64::new(0.0, 0.0);
            for m in 0..=n {
                conv += c[m] * c[n - m];
            }
            let mut rhs = 6.0 * conv;
            if n == 0 {
                rhs -= self.g2 / 2.0;
            }
            c[n + 2] = rhs / (((n + 2) * (n + 1)) as f64);
        }
        Ok(c)
    }

    /// `wp^{(m)}(x)` for `m <= order` via the Taylor recursion.
    pub fn wp_derivatives(&self, x: C64, order: usize) -> Result<Vec<C64>> {
        let mut c = self.wp_taylor(x, order)?;
        let mut fact = 1.0;
        for (m, v) in c.iter_mut().enumerate() {
            if m > 0 {
                fact *= m as f64;
            }
            *v *= fact;
        }
        Ok(c)
    }

    /// Nome expansions of `wp(x + omega)` for `omega in {1/2, tau/2, (1+tau)/2}`.
    ///
    /// `shift = 1` gives `wp(x + 1/2)`, `shift = 3` gives `wp(x + tau/2)` and
    /// `shift = 2` gives `wp(x + (1 + tau)/2)`; `shift = 0` is `wp` itself.
    pub fn wp_shifted_series(&self, shift: usize, x: C64) -> Result<C64> {
        let pi2 = PI * PI;
        match shift {
            0 => self.wp(x),
            1 => {
                let c = (PI * x).cos();
                if c.norm() < self.pole_radius() {
                    return Err(QesError::PoleProximity {
                        arg: format!("{x}"),
                        radius: self.pole_radius(),
                    });
                }
                let series = self.nome_sum_raw(x, 2, |n, p2n| {
                    let sign = if (n as usize) % 2 == 0 { 1.0 } else { -1.0 };
                    n * p2n / (1.0 - p2n) * (sign * (2.0 * n * PI * x).cos() - 1.0)
                })?;
                Ok(pi2 / (c * c) - pi2 / 3.0 - 8.0 * pi2 * series)
            }
            2 | 3 => {
                let alt = shift == 2;
                let series = self.nome_sum_raw(x, 1, |n, pn| {
                    let sign = if alt && (n as usize) % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    };
                    n * pn * (sign * (2.0 * PI * n * x).cos() - pn) / (1.0 - pn * pn)
                })?;
                Ok(C64::new(-pi2 / 3.0, 0.0) - 8.0 * pi2 * series)
            }
            _ => Err(QesError::InvalidParameter(format!(
                "shift index {shift} out of range 0..=3"
            ))),
        }
    }

    /// Sums `f(n, p^{step n})` for a non-reduced argument, with the growth of
    /// `cos(2 n pi x)` folded into the majorant.
    fn nome_sum_raw<F>(&self, x: C64, step: i32, f: F) -> Result<C64>
    where
        F: Fn(f64, C64) -> C64,
    {
        let p = self.nome_p;
        let ps = p.powi(step);
        let ratio = ps.norm() * (2.0 * PI * x.im.abs()).exp();
        if ratio >= 1.0 {
            return Err(QesError::SeriesNotConverged {
                terms: self.series_terms,
                tail: f64::INFINITY,
                tol: self.tol,
            });
        }
        let damp = 1.0 / (1.0 - ps.norm().min(0.999));
        let mut pn = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..=self.series_terms {
            pn *= ps;
            let nf = n as f64;
            acc += f(nf, pn);
            let tail = 16.0 * PI * PI * geometric_tail(nf, ratio, 1.0) * damp;
            if tail < self.tol * 1e-3 {
                return Ok(acc);
            }
        }
        Err(QesError::SeriesNotConverged {
            terms: self.series_terms,
            tail: 16.0 * PI * PI * geometric_tail(self.series_terms as f64, ratio, 1.0) * damp,
            tol: self.tol,
        })
    }

    /// Jacobi theta function `theta_j(x)`; `j = 0` and `j = 4` both denote `theta_0`.
    pub fn theta(&self, j: usize, x: C64) -> Result<C64> {
        self.theta_series(j, x, false)
    }

    /// Derivative `theta_j'(x)`.
    pub fn theta_prime(&self, j: usize, x: C64) -> Result<C64> {
        self.theta_series(j, x, true)
    }

    fn theta_series(&self, j: usize, x: C64, derivative: bool) -> Result<C64> {
        let j = if j == 4 { 0 } else { j };
        if j > 3 {
            return Err(QesError::InvalidParameter(format!(
                "theta index {j} out of range 0..=4"
            )));
        }
        let half = j == 1 || j == 2;
        let y = x.im.abs();
        let mut acc = if half || derivative {
            C64::new(0.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        };
        let im_tau = self.tau.im;
        for n in 1..=self.series_terms {
            let nf = n as f64;
            let (k, freq) = if half {
                (nf - 0.5, (2.0 * nf - 1.0) * PI)
            } else {
                (nf, 2.0 * nf * PI)
            };
            let q = (I * PI * self.tau * k * k).exp();
            let sign = match j {
                1 => {
                    if n % 2 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                0 => {
                    if n % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => 1.0,
            };
            let arg = freq * x;
            let term = match (j, derivative) {
                (1, false) => arg.sin(),
                (1, true) => freq * arg.cos(),
                (_, false) => arg.cos(),
                (_, true) => -freq * arg.sin(),
            };
            acc += 2.0 * sign * q * term;
            // Gaussian majorant of the next term; decreasing once past the peak.
            let next_k = k + 1.0;
            let next_freq = freq + 2.0 * PI;
            let scale = if derivative { next_freq } else { 1.0 };
            let bound_next = 2.0 * scale * (-PI * im_tau * next_k * next_k + next_freq * y).exp();
            let bound_after = 2.0
                * (scale + 2.0 * PI)
                * (-PI * im_tau * (next_k + 1.0).powi(2) + (next_freq + 2.0 * PI) * y).exp();
            let past_peak = next_k * 2.0 * PI * im_tau > 2.0 * PI * y + 1.0;
            if past_peak && bound_after < bound_next {
                let r = bound_after / bound_next;
                let tail = bound_next / (1.0 - r);
                if tail < self.tol * 1e-3 * acc.norm().max(1.0) {
                    return Ok(acc);
                }
            }
        }
        Err(QesError::SeriesNotConverged {
            terms: self.series_terms,
            tail: f64::NAN,
            tol: self.tol,
        })
    }

    /// `theta_j(x + tau) / theta_j(x)`.
    pub fn theta_quasiperiod_factor(&self, j: usize, x: C64) -> Result<C64> {
        let base = self.theta(j, x)?;
        if base.norm() < self.tol {
            return Err(QesError::DivisionByNearZero {
                what: format!("theta_{j}({x})"),
                tol: self.tol,
            });
        }
        Ok(self.theta(j, x + self.tau)? / base)
    }

    /// Residuals of the addition, the `wp(x+y) + wp(x-y)` identity, duplication,
    /// and the three half-period shifts at the pair `(x, y)`.
    pub fn wp_identity_residuals(&self, x: C64, y: C64) -> Result<IdentityResiduals> {
        let px = self.wp(x)?;
        let py = self.wp(y)?;
        let dx = self.wp_prime(x)?;
        let dy = self.wp_prime(y)?;
        let diff = px - py;
        if diff.norm() < self.pole_radius() {
            return Err(QesError::PoleProximity {
                arg: format!("wp({x}) - wp({y})"),
                radius: self.pole_radius(),
            });
        }
        let sum = self.wp(x + y)?;
        let addition = ((dx - dy) / diff).powi(2) / 4.0 - px - py;
        let addition = (sum - addition).norm();
        // with the derivative sum instead of the difference the same
        // expression produces wp(x - y)
        let reflected = ((dx + dy) / diff).powi(2) / 4.0 - px - py;
        let reflected_addition = (self.wp(x - y)? - reflected).norm();
        let pm = sum + self.wp(x - y)?;
        let pm_rhs = (dx * dx + dy * dy) / (2.0 * diff * diff) - 2.0 * px - 2.0 * py;
        let sum_difference = (pm - pm_rhs).norm();
        let d2 = self.wp_second(x)?;
        let duplication = (self.wp(2.0 * x)? - ((d2 / dx).powi(2) / 4.0 - 2.0 * px)).norm();
        let mut half_shift = [0.0; 3];
        for i in 1..=3 {
            let ei = self.e[i - 1];
            let (a, b) = others(i);
            let rhs = ei + (ei - self.e[a - 1]) * (ei - self.e[b - 1]) / (px - ei);
            half_shift[i - 1] = (self.wp(x + self.half_period(i))? - rhs).norm();
        }
        Ok(IdentityResiduals {
            addition,
            reflected_addition,
            sum_difference,
            duplication,
            half_shift,
        })
    }
}

/// Residuals reported by [`EllipticParams::wp_identity_residuals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    pub addition: f64,
    /// `wp(x - y)` against the addition formula with `wp'(x) + wp'(y)`.
    pub reflected_addition: f64,
    pub sum_difference: f64,
    pub duplication: f64,
    pub half_shift: [f64; 3],
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.half_shift.iter().copied().fold(
            self.addition
                .max(self.reflected_addition)
                .max(self.sum_difference)
                .max(self.duplication),
            f64::max,
        )
    }
}

/// The two indices of `{1, 2, 3}` other than `i`, in increasing order.
pub fn others(i: usize) -> (usize, usize) {
    match i {
        1 => (2, 3),
        2 => (1, 3),
        3 => (1, 2),
        _ => panic!("index {i} out of range 1..=3"),
    }
}

/// Bound on `sum_{m > n} m^power r^m` for `0 <= r < 1` (power 1 or 2).
fn geometric_tail(n: f64, r: f64, power: f64) -> f64 {
    if r >= 1.0 {
        return f64::INFINITY;
    }
    let m = n + 1.0;
    let lead = m.powf(power) * r.powf(m);
    // ratio of consecutive terms beyond m is at most ((m+1)/m)^power r
    let q = ((m + 1.0) / m).powf(power) * r;
    if q >= 1.0 {
        return f64::INFINITY;
    }
    lead / (1.0 - q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EllipticParams {
        EllipticParams::new(C64::new(0.0, 1.3)).unwrap()
    }

    #[test]
    fn half_period_values_sum_to_zero() {
        let p = params();
        let s = p.wp(p.half_period(1)).unwrap()
            + p.wp(p.half_period(2)).unwrap()
            + p.wp(p.half_period(3)).unwrap();
        assert!(s.norm() < 1e-10, "{s}");
        let direct: C64 = p.e.iter().sum();
        assert!(direct.norm() < 1e-10);
    }

    #[test]
    fn wp_is_even_and_periodic() {
        let p = EllipticParams::new(C64::new(0.3, 1.1)).unwrap();
        let x = C64::new(0.23, 0.11);
        let v = p.wp(x).unwrap();
        assert!((p.wp(-x).unwrap() - v).norm() < 1e-10);
        assert!((p.wp(x + 1.0).unwrap() - v).norm() < 1e-10);
        assert!((p.wp(x + p.tau).unwrap() - v).norm() < 1e-10);
    }

    #[test]
    fn pole_is_rejected() {
        let p = params();
        assert!(matches!(
            p.wp(C64::new(1e-8, 0.0)),
            Err(QesError::PoleProximity { .. })
        ));
        assert!(matches!(
            p.wp(p.tau + 1.0),
            Err(QesError::PoleProximity { .. })
        ));
    }

    #[test]
    fn wp_prime_vanishes_at_half_periods() {
        let p = params();
        for i in 1..=3 {
            let v = p.wp_prime(p.half_period(i)).unwrap();
            assert!(v.norm() < 1e-9, "i={i}: {v}");
        }
    }

    #[test]
    fn theta_one_is_odd() {
        let p = params();
        assert!(p.theta(1, C64::new(0.0, 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn theta_index_four_is_theta_zero() {
        let p = params();
        let x = C64::new(0.17, 0.05);
        assert_eq!(p.theta(4, x).unwrap(), p.theta(0, x).unwrap());
    }

    #[test]
    fn quasiperiod_factor_zero_base_is_rejected() {
        let p = params();
        assert!(matches!(
            p.theta_quasiperiod_factor(1, C64::new(0.0, 0.0)),
            Err(QesError::DivisionByNearZero { .. })
        ));
    }

    #[test]
    fn degenerate_addition_is_rejected() {
        let p = params();
        let x = C64::new(0.21, 0.13);
        assert!(matches!(
            p.wp_identity_residuals(x, x),
            Err(QesError::PoleProximity { .. })
        ));
    }

    #[test]
    fn tiny_budget_reports_nonconvergence() {
        let err = EllipticParams::with_options(C64::new(0.0, 0.2), 3, 1e-12).unwrap_err();
        assert!(matches!(err, QesError::SeriesNotConverged { .. }));
    }

    #[test]
    fn invalid_tau_rejected() {
        assert!(EllipticParams::new(C64::new(0.0, -1.0)).is_err());
        assert!(EllipticParams::from_real_nome(1.5).is_err());
    }

    #[test]
    fn taylor_matches_derivatives() {
        let p = params();
        let x = C64::new(0.31, 0.27);
        let d = p.wp_derivatives(x, 3).unwrap();
        assert!((d[2] - p.wp_second(x).unwrap()).norm() < 1e-9);
        // wp''' = 12 wp wp'
        let w = p.wp(x).unwrap();
        let w1 = p.wp_prime(x).unwrap();
        assert!((d[3] - 12.0 * w * w1).norm() < 1e-8 * d[3].norm().max(1.0));
    }
}
