use num_complex::Complex64;
use num_rational::BigRational;
use qes_core::conserved::{
    affine_fit, apply_operator, build_conserved_operator, collocate, collocation_points,
    conserved_matrix, default_point_count, gauged_jet, hamiltonian_operator, EllipticOperator,
    GaugedBasisFunction, OperatorCouplings, SignedPermutation, DEFAULT_MARGIN,
};
use qes_core::elliptic::EllipticParams;
use qes_core::inozemtsev::{binomial, gauge_factor_phi, hamiltonian_matrix, GaugeChoice};
use qes_core::operator::relative_commutator;
use qes_core::ring::rational;
use qes_core::sympoly::{msym_expand, Partition};
use qes_core::QesError;

type C64 = Complex64;

fn q(n: i64) -> BigRational {
    rational(n, 1)
}

fn params() -> EllipticParams {
    EllipticParams::new(C64::new(0.0, 1.3)).unwrap()
}

/// Gauge with degree `d` from `a, b_1..b_3`.
fn gauge(n: usize, d: u32, a: BigRational, b123: [BigRational; 3]) -> GaugeChoice {
    let [b1, b2, b3] = b123;
    let b0 = -q(d as i64) - q(n as i64 - 1) * &a - &b1 - &b2 - &b3;
    let g = GaugeChoice::new(n, a, [b0, b1, b2, b3]);
    assert_eq!(g.degree(), Some(d));
    g
}

fn sample_gauge(n: usize, d: u32) -> GaugeChoice {
    gauge(
        n,
        d,
        rational(3, 2),
        [rational(1, 2), rational(-1, 4), q(1)],
    )
}

fn points_for(g: &GaugeChoice, p: &EllipticParams, seed: u64) -> Vec<Vec<C64>> {
    let dim = binomial(g.n as u64 + g.degree().unwrap() as u64, g.n as u64) as usize;
    collocation_points(g.n, p, default_point_count(dim), seed, DEFAULT_MARGIN)
}

fn msym_value(lambda: &Partition, z: &[C64]) -> C64 {
    msym_expand(lambda, z.len())
        .unwrap()
        .iter()
        .map(|e| {
            e.iter()
                .zip(z)
                .map(|(&k, zj)| zj.powi(k as i32))
                .product::<C64>()
        })
        .sum()
}

/// `Phi(wp(x)) m_lambda(wp(x))` evaluated directly.
fn gauged_value(g: &GaugeChoice, lambda: &Partition, x: &[C64], p: &EllipticParams) -> C64 {
    let z: Vec<C64> = x.iter().map(|&xj| p.wp(xj).unwrap()).collect();
    gauge_factor_phi(g, &z, &p.e).unwrap() * msym_value(lambda, &z)
}

/// `Phi(wp(y)) / Phi(wp(x)) m_lambda(wp(y))` with every factor taken as a
/// principal power of a ratio close to one, so nearby `y` never cross a cut.
fn gauged_ratio(
    g: &GaugeChoice,
    lambda: &Partition,
    y: &[C64],
    x: &[C64],
    p: &EllipticParams,
) -> C64 {
    let zy: Vec<C64> = y.iter().map(|&t| p.wp(t).unwrap()).collect();
    let zx: Vec<C64> = x.iter().map(|&t| p.wp(t).unwrap()).collect();
    let a = q_f(&g.a);
    let mut v = msym_value(lambda, &zy);
    for j in 0..y.len() {
        for k in (j + 1)..y.len() {
            v *= ((zy[j] - zy[k]) / (zx[j] - zx[k])).powf(a);
        }
        for i in 0..3 {
            v *= ((zy[j] - p.e[i]) / (zx[j] - p.e[i])).powf(q_f(&g.b[i + 1]));
        }
    }
    v
}

/// Mixed partial derivative by tensor-product central differences with one
/// Richardson step.
fn finite_difference(f: &dyn Fn(&[C64]) -> C64, x: &[C64], alpha: &[u32], h: f64) -> C64 {
    let stencil = |h: f64| -> C64 {
        let mut total = C64::new(0.0, 0.0);
        let n = x.len();
        let mut offsets = vec![vec![(0i32, 1.0f64)]; n];
        for j in 0..n {
            offsets[j] = match alpha[j] {
                0 => vec![(0, 1.0)],
                1 => vec![(1, 0.5 / h), (-1, -0.5 / h)],
                2 => vec![(1, 1.0 / (h * h)), (0, -2.0 / (h * h)), (-1, 1.0 / (h * h))],
                _ => panic!("order above 2"),
            };
        }
        let mut idx = vec![0usize; n];
        loop {
            let mut w = 1.0;
            let mut y = x.to_vec();
            for j in 0..n {
                let (s, c) = offsets[j][idx[j]];
                w *= c;
                y[j] += h * s as f64;
            }
            total += f(&y) * w;
            let mut j = 0;
            loop {
                if j == n {
                    return total;
                }
                idx[j] += 1;
                if idx[j] < offsets[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    };
    (stencil(h / 2.0) * 4.0 - stencil(h)) / 3.0
}

#[test]
fn hamiltonian_term_list_reproduces_gauged_matrix() {
    let p = params();
    for (n, d) in [(1usize, 3u32), (2, 2), (3, 1)] {
        let g = sample_gauge(n, d);
        let h = hamiltonian_operator(&OperatorCouplings::from_gauge(&g));
        let fitted = collocate(&h, &g, &p, &points_for(&g, &p, 7)).unwrap();
        assert!(
            fitted.closure_residual < 1e-9,
            "N={n}: residual {}",
            fitted.closure_residual
        );
        let exact = hamiltonian_matrix(&g, &p.e).unwrap();
        let diff = (fitted.to_dmatrix() - exact.to_dmatrix()).norm() / exact.to_dmatrix().norm();
        assert!(diff < 1e-8, "N={n} d={d}: relative difference {diff}");
    }
}

#[test]
fn jet_derivatives_match_finite_differences() {
    let p = params();
    let g = sample_gauge(2, 2);
    let lambda = Partition::new(vec![2, 1]);
    let pts = collocation_points(2, &p, 20, 99, 0.15);
    for x in &pts {
        let f = |y: &[C64]| gauged_ratio(&g, &lambda, y, x, &p);
        let jet = gauged_jet(&g, &lambda, x, &p, 2).unwrap();
        for alpha in [[1u32, 0], [0, 2], [1, 1], [2, 1], [2, 2]] {
            let exact = jet.derivative(&alpha).unwrap();
            let approx = finite_difference(&f, x, &alpha, 2e-3);
            let rel = (exact - approx).norm() / exact.norm();
            assert!(rel < 1e-5, "alpha {alpha:?} at {x:?}: {exact} vs {approx}");
        }
    }
}

#[test]
fn first_derivative_of_gauge_factor_is_its_log_derivative() {
    let p = params();
    let g = GaugeChoice::new(
        1,
        q(0),
        [q(0), rational(1, 3), rational(-1, 2), rational(5, 4)],
    );
    let f = GaugedBasisFunction {
        gauge: g.clone(),
        label: Partition::empty(),
    };
    let d1 = EllipticOperator::derivative(1, vec![1]);
    for x in collocation_points(1, &p, 5, 3, 0.1) {
        let v = apply_operator(&d1, &f, &x, &p).unwrap();
        let z = p.wp(x[0]).unwrap();
        let dz = p.wp_prime(x[0]).unwrap();
        let expected: C64 = (0..3).map(|i| dz * q_f(&g.b[i + 1]) / (z - p.e[i])).sum();
        assert!((v - expected).norm() < 1e-10 * expected.norm());
        let phi = |y: &[C64]| gauged_value(&g, &Partition::empty(), y, &p);
        let fd = finite_difference(&phi, &x, &[1], 1e-3) / phi(&x);
        assert!((v - fd).norm() < 1e-6 * v.norm());
    }
}

fn q_f(x: &BigRational) -> f64 {
    qes_core::ring::rational_to_f64(x)
}

#[test]
fn constant_operator_returns_the_function_ratio_one() {
    let p = params();
    let g = sample_gauge(2, 1);
    let f = GaugedBasisFunction {
        gauge: g,
        label: Partition::new(vec![1]),
    };
    let x = vec![C64::new(0.31, 0.4), C64::new(0.62, 0.17)];
    let v = apply_operator(&EllipticOperator::identity(2), &f, &x, &p).unwrap();
    let z: Vec<C64> = x.iter().map(|&t| p.wp(t).unwrap()).collect();
    assert!((v - (z[0] + z[1])).norm() < 1e-12 * v.norm());
}

#[test]
fn conserved_values_are_hyperoctahedrally_invariant() {
    let p = params();
    for n in 2..=3usize {
        let g = sample_gauge(n, 1);
        let c = OperatorCouplings::from_gauge(&g);
        let group = SignedPermutation::hyperoctahedral_group(n);
        for k in 1..=n {
            let op = build_conserved_operator(&c, k).unwrap();
            let f = GaugedBasisFunction {
                gauge: g.clone(),
                label: Partition::new(vec![1]),
            };
            let x = collocation_points(n, &p, 1, 5, 0.1).remove(0);
            let base = apply_operator(&op, &f, &x, &p).unwrap();
            for w in group.iter().step_by(3) {
                let v = apply_operator(&op, &f, &w.apply_point(&x), &p).unwrap();
                assert!(
                    (v - base).norm() < 1e-8 * base.norm(),
                    "N={n} k={k}: {v} vs {base}"
                );
            }
        }
    }
}

#[test]
fn second_operator_closes_and_commutes_for_two_particles() {
    let p = params();
    for d in 1..=3u32 {
        let g = sample_gauge(2, d);
        let pts = points_for(&g, &p, 11);
        let p2 = conserved_matrix(2, &g, &p, &pts).unwrap();
        assert!(
            p2.closure_residual < 1e-8,
            "d={d}: closure {}",
            p2.closure_residual
        );
        let h = hamiltonian_matrix(&g, &p.e).unwrap().to_dmatrix();
        let comm = relative_commutator(&h, &p2.to_dmatrix());
        assert!(comm < 1e-8, "d={d}: commutator {comm}");
        let p1 = conserved_matrix(1, &g, &p, &pts).unwrap();
        let fit = affine_fit(&p1.to_dmatrix(), &h).unwrap();
        assert!(
            fit.residual < 1e-8,
            "d={d}: affine residual {}",
            fit.residual
        );
        let pair = q_f(&g.pair_coupling());
        assert!((fit.a + 1.0).norm() < 1e-8, "A = {}", fit.a);
        assert!(
            (fit.b - 2.0 * pair).norm() < 1e-7 * pair.abs().max(1.0),
            "B = {}",
            fit.b
        );
    }
}

#[test]
fn three_particle_operators_close_and_commute() {
    let p = params();
    for d in 1..=2u32 {
        let g = sample_gauge(3, d);
        let pts = points_for(&g, &p, 13);
        let h = hamiltonian_matrix(&g, &p.e).unwrap().to_dmatrix();
        for k in 1..=3 {
            let pk = conserved_matrix(k, &g, &p, &pts).unwrap();
            assert!(
                pk.closure_residual < 1e-8,
                "d={d} k={k}: closure {}",
                pk.closure_residual
            );
            let comm = relative_commutator(&h, &pk.to_dmatrix());
            assert!(comm < 1e-8, "d={d} k={k}: commutator {comm}");
        }
    }
}

#[test]
fn collocation_is_stable_under_resampling() {
    let p = params();
    let g = sample_gauge(2, 2);
    let a = conserved_matrix(2, &g, &p, &points_for(&g, &p, 21))
        .unwrap()
        .to_dmatrix();
    let b = conserved_matrix(2, &g, &p, &points_for(&g, &p, 22))
        .unwrap()
        .to_dmatrix();
    let rel = (&a - &b).norm() / a.norm();
    assert!(rel < 1e-7, "relative difference {rel}");
}

#[test]
fn unsupported_particle_number_and_too_few_points() {
    let c = OperatorCouplings {
        n: 4,
        pair: q(2),
        external: [q(0), q(0), q(0), q(0)],
    };
    assert!(matches!(
        build_conserved_operator(&c, 1),
        Err(QesError::UnsupportedN(4))
    ));
    let p = params();
    let g = sample_gauge(2, 1);
    let pts = collocation_points(2, &p, 3, 1, DEFAULT_MARGIN);
    assert!(matches!(
        conserved_matrix(1, &g, &p, &pts),
        Err(QesError::InvalidParameter(_))
    ));
}
