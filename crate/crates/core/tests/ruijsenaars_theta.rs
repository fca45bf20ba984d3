use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;
use qes_core::elliptic::EllipticParams;
use qes_core::inozemtsev::{binomial, GaugeChoice};
use qes_core::ring::rational;
use qes_core::ruijsenaars::*;
use qes_core::QesError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C64 = Complex64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn params() -> EllipticParams {
    EllipticParams::new(C64::new(0.0, 1.3)).unwrap()
}

/// Random real parameters with `nubar_0` solved from the level condition.
fn draw(n: usize, level: f64, rng: &mut ChaCha8Rng) -> RuijsenaarsParams {
    let mut r = |lo: f64, hi: f64| c(rng.random_range(lo..hi));
    let kappa = r(0.08, 0.3);
    let mu = r(0.05, 0.25);
    let nu = [r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2)];
    let mut nubar = [c(0.0), r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2)];
    let rest: C64 = nu.iter().chain(&nubar[1..]).sum();
    nubar[0] = kappa * level - 2.0 * (n as f64 - 1.0) * mu - rest;
    RuijsenaarsParams::new(n, kappa, mu, nu, nubar).unwrap()
}

fn gauge(n: usize, d: u32) -> GaugeChoice {
    let a = rational(3, 2);
    let b = [rational(1, 2), rational(-1, 4), rational(1, 1)];
    let b0: BigRational =
        -rational(d as i64, 1) - rational(n as i64 - 1, 1) * &a - &b[0] - &b[1] - &b[2];
    let [b1, b2, b3] = b;
    GaugeChoice::new(n, a, [b0, b1, b2, b3])
}

#[test]
fn theta_space_dimensions() {
    let p = params();
    assert_eq!(theta_basis(1, 0, &p).unwrap().dim(), 1);
    assert_eq!(theta_basis(1, 2, &p).unwrap().dim(), 2);
    assert_eq!(theta_basis(2, 2, &p).unwrap().dim(), 3);
    assert_eq!(theta_basis(2, 4, &p).unwrap().dim(), 6);
    for n in 1..=3usize {
        for l in 0..=3u32 {
            let b = theta_basis(n, 2 * l, &p).unwrap();
            assert_eq!(b.dim() as u64, binomial(n as u64 + l as u64, n as u64));
            assert!(
                b.rank_certificate > RANK_TOL,
                "N={n} l={l}: {}",
                b.rank_certificate
            );
            assert_eq!(b.one_variable[0], [0, 0, 0, l]);
        }
    }
    assert!(matches!(
        theta_basis(1, 3, &p),
        Err(QesError::InvalidParameter(_))
    ));
}

#[test]
fn basis_members_are_quasiperiodic() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for (n, k) in [(1usize, 2u32), (1, 4), (2, 2), (2, 4)] {
        let basis = theta_basis(n, k, &p).unwrap();
        for member in 0..basis.dim() {
            let f = |y: &[C64]| basis.eval(&p, member, y);
            for _ in 0..20 {
                let x: Vec<C64> = (0..n)
                    .map(|_| {
                        C64::new(rng.random_range(0.0..1.0), 0.0)
                            + p.tau * rng.random_range(-0.5..0.5)
                    })
                    .collect();
                let shift: Vec<i64> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
                let (t, o) = quasiperiodicity_check(&f, k as f64, &x, &shift, &p).unwrap();
                let scale = f(&x).unwrap().norm().max(1.0);
                assert!(
                    t < 1e-9 * scale && o < 1e-9 * scale,
                    "N={n} k={k} member {member}: {t:e} {o:e}"
                );
            }
        }
    }
}

#[test]
fn quasiperiodicity_examples() {
    let p = params();
    let x = [C64::new(0.37, 0.21)];
    let sq3 = |y: &[C64]| Ok(p.theta(3, y[0])?.powi(2));
    assert_eq!(
        quasiperiodicity_check(&sq3, 2.0, &x, &[0], &p).unwrap(),
        (0.0, 0.0)
    );
    let (t, o) = quasiperiodicity_check(&sq3, 2.0, &x, &[1], &p).unwrap();
    assert!(t < 1e-10 && o < 1e-10);
    let mixed = |y: &[C64]| Ok(p.theta(1, y[0])? * p.theta(3, y[0])?);
    let (_, o) = quasiperiodicity_check(&mixed, 2.0, &x, &[1], &p).unwrap();
    assert!(o > 1e-2, "parity mismatch under x -> x + 1 must show: {o}");
}

/// Term-by-term transcription of the one-particle operator.
fn y1_by_hand(rp: &RuijsenaarsParams, p: &EllipticParams, f: &dyn Fn(C64) -> C64, x: C64) -> C64 {
    let t = |j: usize, y: C64| p.theta(j, y).unwrap();
    let (k, mu, h) = (rp.kappa, rp.mu, rp.kappa / 2.0);
    let thetas = [1, 2, 3, 0];
    let mut plus = c(1.0);
    let mut minus = c(1.0);
    for r in 0..4 {
        let j = thetas[r];
        plus *= t(j, x - rp.nu[r]) / t(j, x) * t(j, x + h - rp.nubar[r]) / t(j, x + h);
        minus *= t(j, x + rp.nu[r]) / t(j, x) * t(j, x - h + rp.nubar[r]) / t(j, x - h);
    }
    let perms = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]];
    let pre = 2.0 * (std::f64::consts::PI / p.theta_prime(1, c(0.0)).unwrap()).powi(2)
        / (t(1, mu) * t(1, k + mu));
    let mut diag = c(0.0);
    for pp in 0..4 {
        let mut term = pre;
        for r in 0..4 {
            term *= t(thetas[r], h + rp.nu[perms[pp][r]]) * t(thetas[r], rp.nubar[perms[pp][r]]);
        }
        let j = thetas[pp];
        term *= t(j, x - h - mu) / t(j, x - h) * t(j, x + h + mu) / t(j, x + h);
        diag += term;
    }
    plus * f(x + k) + minus * f(x - k) + diag * f(x)
}

#[test]
fn one_particle_operator_matches_hand_evaluation() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rp = draw(1, 2.0, &mut rng);
    let x = C64::new(0.31, 0.27);
    for f in [
        Box::new(|_: C64| c(1.0)) as Box<dyn Fn(C64) -> C64>,
        Box::new(|y: C64| p.theta(3, y).unwrap().powi(2)),
    ] {
        let expected = y1_by_hand(&rp, &p, &*f, x);
        let got = y1_apply(&rp, &p, &|y: &[C64]| Ok(f(y[0])), &[x]).unwrap();
        assert!(
            (got - expected).norm() < 1e-12 * expected.norm(),
            "{got} vs {expected}"
        );
    }
}

#[test]
fn vanishing_denominators_are_refused() {
    let p = params();
    let rp = RuijsenaarsParams::new(1, c(0.1), c(0.0), [c(0.0); 4], [c(0.0); 4]).unwrap();
    let one = |_: &[C64]| Ok(c(1.0));
    assert!(matches!(
        y1_apply(&rp, &p, &one, &[C64::new(0.3, 0.2)]),
        Err(QesError::DenominatorNearZero { .. })
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rp = draw(2, 2.0, &mut rng);
    let x = [C64::new(0.3, 0.2), C64::new(0.3, 0.2)];
    assert!(matches!(
        y1_apply(&rp, &p, &one, &x),
        Err(QesError::DenominatorNearZero { .. })
    ));
    assert!(RuijsenaarsParams::new(1, c(0.0), c(0.1), [c(0.0); 4], [c(0.0); 4]).is_err());
}

#[test]
fn image_is_invariant_and_quasiperiodic() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rp = draw(2, 4.0, &mut rng);
    let basis = theta_basis(2, 4, &p).unwrap();
    let f = |y: &[C64]| basis.eval(&p, 4, y);
    let image = |y: &[C64]| y1_apply(&rp, &p, &f, y);
    let x = vec![C64::new(0.23, 0.14), C64::new(0.71, -0.22)];
    let base = image(&x).unwrap();
    for w in [
        vec![-x[0], x[1]],
        vec![x[1], x[0]],
        vec![x[0], -x[1]],
        vec![-x[1], -x[0]],
    ] {
        let v = image(&w).unwrap();
        assert!((v - base).norm() < 1e-9 * base.norm(), "{v} vs {base}");
    }
    for shift in [[1i64, 0], [0, -1], [1, 1]] {
        let (t, o) = quasiperiodicity_check(&image, 4.0, &x, &shift, &p).unwrap();
        assert!(
            t < 1e-9 * base.norm().max(1.0) && o < 1e-9 * base.norm().max(1.0),
            "{shift:?}: {t:e} {o:e}"
        );
    }
}

#[test]
fn operator_preserves_theta_spaces_and_control_fails() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 1..=2usize {
        for k in [2u32, 4] {
            let basis = theta_basis(n, k, &p).unwrap();
            for draw_no in 0..3 {
                let rp = draw(n, k as f64, &mut rng);
                assert_eq!(rp.even_level(1e-9), Some(k));
                let pts = theta_points(&rp, &p, 3 * basis.dim() + 6, draw_no, 0.05);
                let m = verify_y1_invariance(&rp, &p, &basis, &pts).unwrap();
                assert_eq!(m.dim(), basis.dim());
                assert!(
                    m.closure_residual < 1e-8,
                    "N={n} k={k}: {}",
                    m.closure_residual
                );
                let off = draw(n, k as f64 + 1.0, &mut rng);
                assert_eq!(off.even_level(1e-9), None);
                let ctrl = verify_y1_invariance(&off, &p, &basis, &pts).unwrap();
                assert!(
                    ctrl.closure_residual > 1e-2,
                    "N={n} k={k}: control {}",
                    ctrl.closure_residual
                );
            }
        }
    }
}

#[test]
fn too_few_points_are_rejected() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rp = draw(2, 2.0, &mut rng);
    let basis = theta_basis(2, 2, &p).unwrap();
    let pts = theta_points(&rp, &p, 5, 1, 0.05);
    assert!(matches!(
        verify_y1_invariance(&rp, &p, &basis, &pts),
        Err(QesError::InvalidParameter(_))
    ));
}

#[test]
fn limit_parameters_have_level_twice_the_degree() {
    for (n, d) in [(1usize, 1u32), (2, 2), (3, 1)] {
        let g = gauge(n, d);
        let f = |q: &BigRational| qes_core::ring::rational_to_f64(q);
        let b = [f(&g.b[0]), f(&g.b[1]), f(&g.b[2]), f(&g.b[3])];
        for pairing in [IndexPairing::Printed, IndexPairing::Untwisted] {
            let rp = RuijsenaarsParams::from_gauge(&LimitSetup::new(n, f(&g.a), b, pairing), 0.07)
                .unwrap();
            assert!((rp.level() - c(2.0 * d as f64)).norm() < 1e-12);
        }
    }
    assert_eq!(
        (0..4)
            .map(|r| IndexPairing::Printed.gauge_index(r))
            .collect::<Vec<_>>(),
        [3, 0, 1, 2]
    );
    assert_eq!(
        (0..4)
            .map(|r| IndexPairing::Untwisted.gauge_index(r))
            .collect::<Vec<_>>(),
        [0, 1, 2, 3]
    );
}

const KAPPAS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn probes() -> (Vec<C64>, Vec<C64>) {
    (vec![C64::new(0.23, 0.31)], vec![C64::new(0.61, -0.17)])
}

#[test]
fn untwisted_limit_recovers_the_hamiltonian_at_second_order() {
    let p = params();
    let (x, x2) = probes();
    let setup = LimitSetup::new(1, 1.5, [0.3, 0.7, -0.2, 0.45], IndexPairing::Untwisted);
    for f in [
        TestFunction::Cosine,
        TestFunction::ShiftedWp {
            shift: C64::new(0.21, 0.33),
        },
    ] {
        let rows = nonrelativistic_limit_check(&setup, &p, &f, &x, &x2, &KAPPAS).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].error < w[0].error, "{f:?}: {rows:?}");
        }
        let order = rows.last().unwrap().observed_order.unwrap();
        assert!((order - 2.0).abs() < 0.05, "{f:?}: order {order}");
    }
}

#[test]
fn printed_pairing_does_not_converge() {
    let p = params();
    let (x, x2) = probes();
    let setup = LimitSetup::new(1, 1.5, [0.3, 0.7, -0.2, 0.45], IndexPairing::Printed);
    let rows =
        nonrelativistic_limit_check(&setup, &p, &TestFunction::Cosine, &x, &x2, &KAPPAS).unwrap();
    assert!(rows.last().unwrap().error > 0.5 * rows[0].error, "{rows:?}");
}

#[test]
fn uneven_split_converges_too() {
    let p = params();
    let (x, x2) = probes();
    let mut setup = LimitSetup::new(1, 1.5, [0.3, 0.7, -0.2, 0.45], IndexPairing::Untwisted);
    setup.split = 0.8;
    let rows =
        nonrelativistic_limit_check(&setup, &p, &TestFunction::Cosine, &x, &x2, &KAPPAS).unwrap();
    assert!(rows.windows(2).all(|w| w[1].error < w[0].error), "{rows:?}");
}

#[test]
fn constant_function_without_couplings_has_no_error() {
    let p = params();
    let (x, x2) = probes();
    for b in [[0.0; 4], [0.5; 4], [0.5, 0.0, 0.0, 0.5]] {
        let setup = LimitSetup::new(1, 1.5, b, IndexPairing::Untwisted);
        for row in
            nonrelativistic_limit_check(&setup, &p, &TestFunction::Constant, &x, &x2, &KAPPAS)
                .unwrap()
        {
            assert!(row.error < 1e-9, "{b:?}: {row:?}");
        }
    }
}

#[test]
fn two_particle_limit_converges() {
    let p = params();
    let x = vec![C64::new(0.23, 0.31), C64::new(0.57, 0.08)];
    let x2 = vec![C64::new(0.61, -0.17), C64::new(0.12, 0.2)];
    let setup = LimitSetup::new(2, 1.5, [0.3, 0.7, -0.2, 0.45], IndexPairing::Untwisted);
    let rows =
        nonrelativistic_limit_check(&setup, &p, &TestFunction::Cosine, &x, &x2, &KAPPAS).unwrap();
    assert!(rows.windows(2).all(|w| w[1].error < w[0].error), "{rows:?}");
}

#[test]
fn theta_gauge_over_polynomial_gauge_is_a_constant_multiple() {
    let p = params();
    for (n, d) in [(1usize, 2u32), (2, 1), (3, 1)] {
        let g = gauge(n, d);
        let rp = draw(n, 2.0, &mut ChaCha8Rng::seed_from_u64(6));
        let pts = theta_points(&rp, &p, 20, 9, 0.05);
        let values: Vec<f64> = pts
            .iter()
            .map(|x| theta_phi_modulus_ratio(&g, &p, x).unwrap())
            .collect();
        for v in &values {
            assert!(v.is_finite() && *v > 0.0);
            assert!(
                (v - values[0]).abs() < 1e-10 * values[0],
                "N={n}: {v} vs {}",
                values[0]
            );
        }
    }
}

#[test]
fn phi_is_an_isomorphism_up_to_dimension_ten() {
    let p = params();
    for (n, d) in [
        (1usize, 0u32),
        (1, 1),
        (1, 3),
        (1, 9),
        (2, 1),
        (2, 2),
        (2, 3),
        (3, 1),
        (3, 2),
        (4, 1),
    ] {
        let g = gauge(n, d);
        let basis = theta_basis(n, 2 * d, &p).unwrap();
        assert!(basis.dim() <= 10);
        let rp = draw(n, 2.0, &mut ChaCha8Rng::seed_from_u64(12));
        let pts = theta_points(&rp, &p, 3 * basis.dim() + 6, 5, 0.05);
        let iso = phi_isomorphism(&g, &p, &basis, &pts).unwrap();
        assert_eq!(iso.matrix.dim(), basis.dim());
        assert!(
            iso.matrix.closure_residual < 1e-8,
            "N={n} d={d}: {}",
            iso.matrix.closure_residual
        );
        assert!(
            iso.singular_ratio() > 1e-6,
            "N={n} d={d}: {}",
            iso.singular_ratio()
        );
    }
}

#[test]
fn phi_requires_matching_levels() {
    let p = params();
    let basis = theta_basis(1, 4, &p).unwrap();
    let rp = draw(1, 2.0, &mut ChaCha8Rng::seed_from_u64(1));
    let pts = theta_points(&rp, &p, 12, 1, 0.05);
    assert!(matches!(
        phi_isomorphism(&gauge(1, 1), &p, &basis, &pts),
        Err(QesError::InvalidParameter(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn members_are_even_and_periodic(u in 0.0f64..1.0, v in -0.5f64..0.5, member in 0usize..3) {
        let p = params();
        let basis = theta_basis(1, 4, &p).unwrap();
        let x = C64::new(u, 0.0) + p.tau * v;
        let f = |y: C64| basis.eval(&p, member, &[y]).unwrap();
        let scale = f(x).norm().max(1.0);
        prop_assert!((f(-x) - f(x)).norm() < 1e-10 * scale);
        prop_assert!((f(x + 1.0) - f(x)).norm() < 1e-10 * scale);
    }

    #[test]
    fn level_is_linear_in_the_couplings(kappa in 0.05f64..0.5, mu in -0.3f64..0.3, s in -0.5f64..0.5) {
        let rp = RuijsenaarsParams::new(2, c(kappa), c(mu), [c(s), c(0.0), c(0.0), c(0.0)], [c(0.0); 4]).unwrap();
        let expected = (2.0 * mu + s) / kappa;
        prop_assert!((rp.level() - c(expected)).norm() < 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn dependent_candidates_fall_back_to_squared_monomials() {
    let p = params();
    let b = theta_basis_with_candidates(2, 4, &p, vec![[0, 0, 0, 2], [0, 0, 0, 2], [0, 0, 2, 0]])
        .unwrap();
    assert_eq!(b.dim(), 6);
    assert!(b.rank_certificate > RANK_TOL);
    assert_ne!(b.one_variable[1], b.one_variable[0]);
    let f = |y: &[C64]| b.eval(&p, 3, y);
    let (t, o) = quasiperiodicity_check(
        &f,
        4.0,
        &[C64::new(0.2, 0.3), C64::new(0.6, -0.1)],
        &[1, -1],
        &p,
    )
    .unwrap();
    assert!(t < 1e-9 && o < 1e-9);
    assert!(matches!(
        theta_basis_with_candidates(1, 2, &p, vec![[0, 0, 0, 1]]),
        Err(QesError::InvalidParameter(_))
    ));
}
