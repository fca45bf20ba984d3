//! Special-function self-test: Weierstrass and theta identities at random
//! points, and the nome series against direct lattice summation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::EllipticParams;
use crate::error::Result;

type C64 = Complex64;

/// Euler-Maclaurin tail `sum_{m > big} m^{-k}`.
fn power_tail(big: f64, k: i32) -> f64 {
    let kf = k as f64;
    let m = big;
    m.powf(1.0 - kf) / (kf - 1.0) - m.powf(-kf) / 2.0 + kf * m.powf(-kf - 1.0) / 12.0
        - kf * (kf + 1.0) * (kf + 2.0) * m.powf(-kf - 3.0) / 720.0
}

/// `1/x^2 + sum' (1/(x-w)^2 - 1/w^2)` over `w = m + n tau`, `|n| <= 60`,
/// `|m| <= 4000`, with the large-`m` tail of each row summed asymptotically.
pub fn lattice_sum_wp(x: C64, tau: C64) -> C64 {
    let big_m = 4000_i64;
    let one = C64::new(1.0, 0.0);
    let mut total = one / (x * x);
    for n in -60_i64..=60 {
        let c0 = -(n as f64) * tau;
        let c = x + c0;
        let mut row = C64::new(0.0, 0.0);
        for m in -big_m..=big_m {
            if m == 0 && n == 0 {
                continue;
            }
            let w = C64::new(m as f64, 0.0) - c0;
            row += one / ((x - w) * (x - w)) - one / (w * w);
        }
        let bm = big_m as f64;
        row += 6.0 * (c * c - c0 * c0) * power_tail(bm, 4)
            + 10.0 * (c.powi(4) - c0.powi(4)) * power_tail(bm, 6)
            + 14.0 * (c.powi(6) - c0.powi(6)) * power_tail(bm, 8);
        total += row;
    }
    total
}

/// Largest scaled residual per identity family at one `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestRow {
    pub tau: C64,
    pub identity: &'static str,
    pub residual: f64,
}

fn random_point(rng: &mut ChaCha8Rng, tau: C64) -> C64 {
    let u: f64 = rng.random_range(0.08..0.92);
    let v: f64 = rng.random_range(0.08..0.92);
    C64::new(u, 0.0) + v * tau
}

/// Runs every identity at `points` random pairs per `tau` and one lattice
/// comparison per `tau`.
pub fn run_selftest(taus: &[C64], points: usize, seed: u64) -> Result<Vec<SelftestRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &tau in taus {
        let p = EllipticParams::new(tau)?;
        let mut worst = [0.0f64; 6];
        let zero = C64::new(0.0, 0.0);
        let th0: Vec<C64> = (0..4).map(|j| p.theta(j, zero)).collect::<Result<_>>()?;
        let jacobi =
            (p.theta_prime(1, zero)? - std::f64::consts::PI * th0[2] * th0[3] * th0[0]).norm();
        for _ in 0..points {
            let x = random_point(&mut rng, tau);
            let y = random_point(&mut rng, tau);
            let w = p.wp(x)?;
            let d = p.wp_prime(x)?;
            let d2 = p.wp_second(x)?;
            let cubic = 4.0 * w * w * w - p.g2 * w - p.g3;
            worst[0] = worst[0].max((d * d - cubic).norm() / cubic.norm().max(1.0));
            let rhs: C64 = p.e.iter().map(|&e| 1.0 / (w - e)).sum::<C64>() / 2.0;
            worst[1] = worst[1].max((d2 / (d * d) - rhs).norm() / rhs.norm().max(1.0));
            let scale = (w.norm() + p.wp(y)?.norm()).max(1.0);
            worst[2] = worst[2].max(p.wp_identity_residuals(x, y)?.max() / (scale * scale));
            // theta identities at a centred point
            let xc = x - C64::new(0.5, 0.0) - 0.5 * tau;
            let t: Vec<C64> = (0..4).map(|j| p.theta(j, xc)).collect::<Result<_>>()?;
            let mut par: f64 = (p.theta(1, -xc)? + t[1]).norm();
            for j in [0, 2, 3] {
                par = par.max((p.theta(j, -xc)? - t[j]).norm());
            }
            let signs = [1.0, -1.0, -1.0, 1.0];
            for j in 0..4 {
                par = par.max((p.theta(j, xc + 1.0)? - signs[j] * t[j]).norm());
            }
            worst[3] = worst[3].max(par);
            let factor = (-C64::i() * std::f64::consts::PI * (2.0 * xc + tau)).exp();
            for j in 0..4 {
                let expected = if j <= 1 { -factor } else { factor };
                let q = p.theta_quasiperiod_factor(j, xc)?;
                worst[4] = worst[4].max((q - expected).norm() / expected.norm().max(1.0));
            }
            let dup = p.theta(1, 2.0 * xc)? * th0[2] * th0[3] * th0[0];
            worst[5] = worst[5].max((dup - 2.0 * t[1] * t[2] * t[3] * t[0]).norm());
        }
        let names = [
            "wp'^2 = 4wp^3 - g2 wp - g3",
            "wp''/wp'^2 = sum 1/(2(wp - e_i))",
            "addition, duplication and half-period shifts",
            "theta parity and unit period",
            "theta quasi-period factor",
            "theta_1 duplication",
        ];
        for (name, r) in names.iter().zip(worst) {
            rows.push(SelftestRow {
                tau,
                identity: name,
                residual: r,
            });
        }
        rows.push(SelftestRow {
            tau,
            identity: "theta_1'(0) = pi theta_2 theta_3 theta_0",
            residual: jacobi,
        });
        let x = C64::new(0.23, 0.11);
        rows.push(SelftestRow {
            tau,
            identity: "nome series against lattice sum",
            residual: (p.wp(x)? - lattice_sum_wp(x, tau)).norm(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tails_match_direct_sums() {
        let direct: f64 = (101..200_000).map(|m| (m as f64).powi(-4)).sum();
        assert!((power_tail(100.0, 4) - direct).abs() < 1e-15);
    }
}
