use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use qes_core::conserved::{
    collocation_points, conserved_matrix, default_point_count, DEFAULT_MARGIN,
};
use qes_core::elliptic::EllipticParams;
use qes_core::exec::{set_mode, ExecMode};
use qes_core::inozemtsev::{binomial, hamiltonian_matrix, GaugeChoice};
use qes_core::ring::{rational, ESym};
use qes_core::ruijsenaars::{theta_basis, theta_points, verify_y1_invariance, RuijsenaarsParams};

type C64 = Complex64;

fn gauge(n: usize, d: u32) -> GaugeChoice {
    let a = rational(3, 2);
    let [b1, b2, b3] = [rational(1, 2), rational(-1, 4), rational(1, 1)];
    let b0 = -rational(d as i64, 1) - rational(n as i64 - 1, 1) * &a - &b1 - &b2 - &b3;
    GaugeChoice::new(n, a, [b0, b1, b2, b3])
}

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn exact_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_hamiltonian_n3_d2");
    group.sample_size(10);
    let g = gauge(3, 2);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_mode(mode);
            b.iter(|| hamiltonian_matrix(&g, &ESym::triple()).unwrap())
        });
    }
    group.finish();
}

fn conserved_collocation(c: &mut Criterion) {
    let mut group = c.benchmark_group("conserved_p3_n3_d2");
    group.sample_size(10);
    let p = EllipticParams::new(C64::new(0.0, 1.3)).unwrap();
    let g = gauge(3, 2);
    let dim = binomial(5, 3) as usize;
    let pts = collocation_points(3, &p, default_point_count(dim), 1, DEFAULT_MARGIN);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_mode(mode);
            b.iter(|| conserved_matrix(3, &g, &p, &pts).unwrap())
        });
    }
    group.finish();
}

fn theta_closure(c: &mut Criterion) {
    let mut group = c.benchmark_group("y1_closure_n2_k4");
    group.sample_size(10);
    let p = EllipticParams::new(C64::new(0.0, 1.3)).unwrap();
    let r = |x: f64| C64::new(x, 0.0);
    let nu = [r(0.05), r(-0.07), r(0.13), r(0.02)];
    let mut nubar = [r(0.0), r(0.09), r(-0.04), r(0.01)];
    let (kappa, mu) = (r(0.17), r(0.11));
    let rest: C64 = nu.iter().chain(&nubar[1..]).sum();
    nubar[0] = kappa * 4.0 - 2.0 * mu - rest;
    let rp = RuijsenaarsParams::new(2, kappa, mu, nu, nubar).unwrap();
    let basis = theta_basis(2, 4, &p).unwrap();
    let pts = theta_points(&rp, &p, 3 * basis.dim() + 6, 1, 0.05);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_mode(mode);
            b.iter(|| verify_y1_invariance(&rp, &p, &basis, &pts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    exact_assembly,
    conserved_collocation,
    theta_closure
);
criterion_main!(benches);
