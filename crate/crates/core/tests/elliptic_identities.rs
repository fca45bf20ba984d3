use num_complex::Complex64 as C64;
use qes_core::elliptic::EllipticParams;
use qes_core::selftest::{lattice_sum_wp, run_selftest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn taus() -> Vec<C64> {
    vec![C64::new(0.0, 1.0), C64::new(0.0, 1.3), C64::new(0.3, 1.1)]
}

fn random_point(rng: &mut ChaCha8Rng, tau: C64) -> C64 {
    let u: f64 = rng.random_range(0.08..0.92);
    let v: f64 = rng.random_range(0.08..0.92);
    C64::new(u, 0.0) + v * tau
}

#[test]
fn nome_series_matches_lattice_sum() {
    let tau = C64::new(0.0, 1.3);
    let p = EllipticParams::new(tau).unwrap();
    let x = C64::new(0.23, 0.11);
    let oracle = lattice_sum_wp(x, tau);
    let v = p.wp(x).unwrap();
    assert!((v - oracle).norm() < 1e-10, "series {v} oracle {oracle}");
}

#[test]
fn weierstrass_identities_hold_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for tau in taus() {
        let p = EllipticParams::new(tau).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, tau);
            let y = random_point(&mut rng, tau);
            let w = p.wp(x).unwrap();
            let d = p.wp_prime(x).unwrap();
            let d2 = p.wp_second(x).unwrap();
            let cubic = 4.0 * w * w * w - p.g2 * w - p.g3;
            assert!((d * d - cubic).norm() < 1e-10 * cubic.norm().max(1.0));
            let lhs = d2 / (d * d);
            let rhs: C64 = p.e.iter().map(|&e| 1.0 / (w - e)).sum::<C64>() / 2.0;
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
            let r = p.wp_identity_residuals(x, y).unwrap();
            let scale = (w.norm() + p.wp(y).unwrap().norm()).max(1.0);
            assert!(r.max() < 1e-10 * scale * scale, "tau {tau}: {r:?}");
            for i in [1, 2, 3] {
                let shifted = p.wp(x + p.half_period(i)).unwrap();
                let series = p.wp_shifted_series(i, x).unwrap_or(shifted);
                assert!((shifted - series).norm() < 1e-10 * shifted.norm().max(1.0));
            }
        }
    }
}

#[test]
fn theta_identities_hold_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for tau in taus() {
        let p = EllipticParams::new(tau).unwrap();
        let zero = C64::new(0.0, 0.0);
        let th0: Vec<C64> = (0..4).map(|j| p.theta(j, zero).unwrap()).collect();
        let lhs = p.theta_prime(1, zero).unwrap();
        let rhs = std::f64::consts::PI * th0[2] * th0[3] * th0[0];
        assert!((lhs - rhs).norm() < 1e-10);
        for _ in 0..20 {
            let x = random_point(&mut rng, tau) - C64::new(0.5, 0.0) - 0.5 * tau;
            let t: Vec<C64> = (0..4).map(|j| p.theta(j, x).unwrap()).collect();
            assert!((p.theta(1, -x).unwrap() + t[1]).norm() < 1e-10);
            for j in [0, 2, 3] {
                assert!((p.theta(j, -x).unwrap() - t[j]).norm() < 1e-10);
            }
            assert!((p.theta(1, x + 1.0).unwrap() + t[1]).norm() < 1e-10);
            assert!((p.theta(2, x + 1.0).unwrap() + t[2]).norm() < 1e-10);
            assert!((p.theta(3, x + 1.0).unwrap() - t[3]).norm() < 1e-10);
            assert!((p.theta(0, x + 1.0).unwrap() - t[0]).norm() < 1e-10);
            let factor = (-C64::i() * std::f64::consts::PI * (2.0 * x + tau)).exp();
            for j in 0..4 {
                let expected = if j <= 1 { -factor } else { factor };
                let q = p.theta_quasiperiod_factor(j, x).unwrap();
                assert!(
                    (q - expected).norm() < 1e-10 * expected.norm().max(1.0),
                    "j={j}"
                );
            }
            let dup = p.theta(1, 2.0 * x).unwrap() * th0[2] * th0[3] * th0[0];
            let prod = 2.0 * t[1] * t[2] * t[3] * t[0];
            assert!((dup - prod).norm() < 1e-10);
        }
    }
}

#[test]
fn second_log_derivative_of_theta_one_differs_from_wp_by_a_constant() {
    let tau = C64::new(0.0, 1.3);
    let p = EllipticParams::new(tau).unwrap();
    let log_theta = |x: C64| p.theta(1, x).unwrap().ln();
    let second =
        |x: C64, h: f64| (log_theta(x + h) - 2.0 * log_theta(x) + log_theta(x - h)) / (h * h);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut constants = Vec::new();
    for _ in 0..10 {
        let x = C64::new(rng.random_range(0.2..0.8), rng.random_range(0.1..0.5));
        let h = 1e-2;
        // Richardson over h, h/2, h/4 removes the h^2 and h^4 terms.
        let d1 = second(x, h);
        let d2 = second(x, h / 2.0);
        let d3 = second(x, h / 4.0);
        let r1 = (4.0 * d2 - d1) / 3.0;
        let r2 = (4.0 * d3 - d2) / 3.0;
        let r = (16.0 * r2 - r1) / 15.0;
        constants.push(-r - p.wp(x).unwrap());
    }
    for c in &constants {
        assert!((c - constants[0]).norm() < 1e-6, "{c} vs {}", constants[0]);
    }
}

#[test]
fn extra_series_terms_do_not_change_values() {
    let tau = C64::new(0.3, 1.1);
    let a = EllipticParams::with_options(tau, 64, 1e-12).unwrap();
    let b = EllipticParams::with_options(tau, 80, 1e-12).unwrap();
    let x = C64::new(0.37, 0.41);
    assert!((a.wp(x).unwrap() - b.wp(x).unwrap()).norm() < 1e-12);
    assert!((a.theta(3, x).unwrap() - b.theta(3, x).unwrap()).norm() < 1e-12);
}

#[test]
fn selftest_sweep_is_within_tolerance() {
    let rows = run_selftest(&taus(), 20, 5).unwrap();
    assert_eq!(rows.len(), 3 * 8);
    for r in rows {
        assert!(r.residual < 1e-10, "{r:?}");
    }
}
