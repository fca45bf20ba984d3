//! The trigonometric (degenerate) model: its gauged Hamiltonian on symmetric
//! polynomials in `u_j = sin^2(pi x_j)`, and the `p -> 0` limit from the
//! elliptic model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::EllipticParams;
use crate::error::{QesError, Result};
use crate::exec;
use crate::inozemtsev::{binomial, hamiltonian_matrix, GaugeChoice, BRANCH_RADIUS};
use crate::linalg;
use crate::operator::OperatorMatrix;
use crate::ring::{rational, rational_to_f64};
use crate::sympoly::{
    apply_cross_term, apply_gauged_term, msym_expand, partitions_in_box, Partition, SymPoly,
    UniPoly,
};

type C64 = Complex64;
type Q = BigRational;

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

/// Couplings of the degenerate model; `c1`, `c2` are stored divided by
/// `pi^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateCoupling {
    pub n: usize,
    pub l: Q,
    pub l0: Q,
    pub l1: Q,
    pub a_tilde: Q,
    pub b_tilde: Q,
    pub big_l: u32,
    pub c1_over_pi2: Q,
    pub c2_over_pi2: Q,
}

impl DegenerateCoupling {
    /// Couplings with `c1`, `c2` fixed by the closure constraints for the
    /// space of per-variable degree `big_l`.
    pub fn new(n: usize, l: Q, l0: Q, l1: Q, a_tilde: Q, big_l: u32) -> Result<Self> {
        if n == 0 {
            return Err(QesError::InvalidParameter(
                "particle number must be at least 1".into(),
            ));
        }
        let b_tilde = rational(big_l as i64, 1)
            + rational(n as i64 - 1, 1) * (&l + rational(1, 1))
            + (&l0 + &l1 + rational(2, 1)) / rational(2, 1);
        let mut dc = DegenerateCoupling {
            n,
            l,
            l0,
            l1,
            a_tilde,
            b_tilde,
            big_l,
            c1_over_pi2: Q::zero(),
            c2_over_pi2: Q::zero(),
        };
        dc.c1_over_pi2 = dc.required_c1_over_pi2();
        dc.c2_over_pi2 = dc.required_c2_over_pi2();
        Ok(dc)
    }

    /// Couplings from the limit data `(a_tilde, b_tilde)`, with
    /// `L = -(N-1)(l+1) - (l0+l1+2)/2 + b_tilde`.
    pub fn from_limit(n: usize, l: Q, l0: Q, l1: Q, a_tilde: Q, b_tilde: Q) -> Result<Self> {
        let big_l = &b_tilde
            - rational(n as i64 - 1, 1) * (&l + rational(1, 1))
            - (&l0 + &l1 + rational(2, 1)) / rational(2, 1);
        if !big_l.is_integer() || big_l.is_negative() {
            return Err(QesError::ConstraintViolated(format!(
                "L = {big_l} is not a nonnegative integer"
            )));
        }
        let big_l = big_l
            .to_integer()
            .to_u32()
            .ok_or_else(|| QesError::InvalidParameter("L too large".into()))?;
        Self::new(n, l, l0, l1, a_tilde, big_l)
    }

    /// `2 a (2L + l0 + l1 + 3 + 2(N-1)(l+1))`.
    pub fn required_c1_over_pi2(&self) -> Q {
        rational(2, 1) * &self.a_tilde * (rational(2 * self.big_l as i64, 1) + self.c3_bracket())
    }

    /// `-a^2 / 2`.
    pub fn required_c2_over_pi2(&self) -> Q {
        -(&self.a_tilde * &self.a_tilde) / rational(2, 1)
    }

    fn c3_bracket(&self) -> Q {
        &self.l0
            + &self.l1
            + rational(3, 1)
            + rational(2 * (self.n as i64 - 1), 1) * (&self.l + rational(1, 1))
    }

    /// The `cos 2 pi x` coefficient produced by the gauge factor alone.
    pub fn c3_over_pi2(&self) -> Q {
        rational(2, 1) * &self.a_tilde * self.c3_bracket()
    }

    /// `C_0 / pi^2`: the constant in `sum (W_j'^2 + W_j'')` for
    /// `W = log Phi_D`.
    pub fn c0_over_pi2(&self) -> Q {
        let n = self.n as i64;
        let a = &self.a_tilde;
        let s = &self.l0 + &self.l1 + rational(2, 1);
        let lp = &self.l + rational(1, 1);
        let single = a * a / rational(2, 1) - &s * &s + rational(2, 1) * a * (&self.l0 - &self.l1);
        let pairs = rational(n * (n - 1), 1);
        let triples = rational(binomial(self.n as u64, 3) as i64, 1);
        rational(n, 1) * single
            - rational(2, 1) * &lp * &s * &pairs
            - rational(2, 1) * &lp * &lp * &pairs
            - rational(8, 1) * &lp * &lp * triples
    }

    pub fn c1(&self) -> f64 {
        rational_to_f64(&self.c1_over_pi2) * PI2
    }

    pub fn c2(&self) -> f64 {
        rational_to_f64(&self.c2_over_pi2) * PI2
    }

    pub fn check_constraints(&self) -> Result<()> {
        if self.c2_over_pi2 != self.required_c2_over_pi2() {
            return Err(QesError::ConstraintViolated(format!(
                "c2 = {} pi^2, closure requires {} pi^2",
                self.c2_over_pi2,
                self.required_c2_over_pi2()
            )));
        }
        if self.c1_over_pi2 != self.required_c1_over_pi2() {
            return Err(QesError::ConstraintViolated(format!(
                "c1 = {} pi^2, closure requires {} pi^2",
                self.c1_over_pi2,
                self.required_c1_over_pi2()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        binomial(self.n as u64 + self.big_l as u64, self.n as u64) as usize
    }
}

/// `(l2, l3) = (a p^{-1}/8 + b, -a p^{-1}/8 + b)`.
pub fn coupling_limit_map(a_tilde: &Q, b_tilde: &Q, p: &Q) -> Result<(Q, Q)> {
    if p.is_zero() {
        return Err(QesError::ZeroNome);
    }
    let s = a_tilde / (rational(8, 1) * p);
    Ok((&s + b_tilde, b_tilde - &s))
}

/// Coefficient data of `Phi_D^{-1} H^(D) Phi_D / pi^2` in the variables
/// `u_j`.
#[derive(Debug, Clone)]
pub struct DegenerateHamiltonian {
    pub n: usize,
    /// `4 u (1 - u)`.
    pub p: UniPoly<Q>,
    /// `2(1 - 2u) + 8 a u (1 - u) + 8 alpha (1 - u) - 8 beta u`.
    pub q: UniPoly<Q>,
    pub two_a: Q,
    /// Residual one-body potential left by `c1`, `c2` after gauging.
    pub potential: UniPoly<Q>,
    pub constant: Q,
}

impl DegenerateHamiltonian {
    pub fn new(dc: &DegenerateCoupling) -> Self {
        let two = rational(2, 1);
        let alpha = (&dc.l0 + rational(1, 1)) / &two;
        let beta = (&dc.l1 + rational(1, 1)) / &two;
        let a8 = rational(8, 1) * &dc.a_tilde;
        let q = vec![
            two.clone() + rational(8, 1) * &alpha,
            rational(-4, 1) + &a8 - rational(8, 1) * (&alpha + &beta),
            -a8,
        ];
        let d1 = &dc.c1_over_pi2 - dc.c3_over_pi2();
        let d2 = &dc.c2_over_pi2 - dc.required_c2_over_pi2();
        // d1 cos 2 pi x + d2 cos 4 pi x with cos 2 pi x = 1 - 2u, cos 4 pi x = 1 - 8u + 8u^2
        let potential = vec![
            &d1 + &d2,
            rational(-2, 1) * &d1 - rational(8, 1) * &d2,
            rational(8, 1) * &d2,
        ];
        DegenerateHamiltonian {
            n: dc.n,
            p: vec![Q::zero(), rational(4, 1), rational(-4, 1)],
            q,
            two_a: two * (&dc.l + rational(1, 1)),
            potential,
            constant: -dc.c0_over_pi2(),
        }
    }

    pub fn apply(&self, f: &SymPoly<Q>) -> Result<SymPoly<Q>> {
        let second = apply_gauged_term(&self.p, 2, f)?;
        let first = apply_gauged_term(&self.q, 1, f)?;
        let cross = apply_cross_term(&self.p, f)?;
        let kinetic = second.add(&first).add(&cross.scale(&self.two_a));
        let mut out = kinetic.scale(&rational(-1, 1));
        out = out.add(&apply_gauged_term(&self.potential, 0, f)?);
        Ok(out.add(&f.scale(&self.constant)))
    }
}

/// Exact matrix of `Phi_D^{-1} H^(D) Phi_D / pi^2` on symmetric polynomials
/// in `u` of per-variable degree at most `L`. Closure is reported through
/// `closure_residual`; use [`DegenerateCoupling::check_constraints`] for the
/// coupling relations.
pub fn degenerate_hamiltonian_matrix(dc: &DegenerateCoupling) -> Result<OperatorMatrix<Q>> {
    let h = DegenerateHamiltonian::new(dc);
    let basis = partitions_in_box(dc.n, dc.big_l);
    let images = exec::try_map(&basis, |lambda| {
        h.apply(&SymPoly::monomial(lambda.clone(), dc.n)?)
    })?;
    Ok(OperatorMatrix::from_images(basis, &images))
}

/// Eigenvalues of `H^(D)` on the invariant space, sorted by real part.
pub fn degenerate_spectrum(dc: &DegenerateCoupling) -> Result<Vec<C64>> {
    let m = degenerate_hamiltonian_matrix(dc)?.map(|q| C64::new(rational_to_f64(q) * PI2, 0.0));
    let mut ev = linalg::eigenvalues(&m.to_dmatrix())?.eigenvalues;
    linalg::sort_complex(&mut ev);
    Ok(ev)
}

fn q_from_f64(x: f64) -> Result<Q> {
    Q::from_f64(x).ok_or_else(|| QesError::InvalidParameter(format!("{x} is not finite")))
}

/// The elliptic gauge of the limit: `a = l+1`, `b_0 = (l0+1)/2`,
/// `b_1 = (l1+1)/2`, `b_2 = -l2/2`, `b_3 = -l3/2`.
pub fn limit_gauge(dc: &DegenerateCoupling, p: &Q) -> Result<GaugeChoice> {
    let (l2, l3) = coupling_limit_map(&dc.a_tilde, &dc.b_tilde, p)?;
    let two = rational(2, 1);
    Ok(GaugeChoice::new(
        dc.n,
        &dc.l + rational(1, 1),
        [
            (&dc.l0 + rational(1, 1)) / &two,
            (&dc.l1 + rational(1, 1)) / &two,
            -l2 / &two,
            -l3 / two,
        ],
    ))
}

fn log_abs(v: f64, what: &str) -> Result<f64> {
    if v.abs() < BRANCH_RADIUS {
        return Err(QesError::BranchPointProximity {
            what: what.to_string(),
            radius: BRANCH_RADIUS,
        });
    }
    Ok(v.abs().ln())
}

fn log_abs_c(v: C64, what: &str) -> Result<f64> {
    if v.norm() < BRANCH_RADIUS {
        return Err(QesError::BranchPointProximity {
            what: what.to_string(),
            radius: BRANCH_RADIUS,
        });
    }
    Ok(v.norm().ln())
}

/// `log |Phi(wp(x))|` for real exponents.
pub fn log_phi_modulus(g: &GaugeChoice, ep: &EllipticParams, x: &[f64]) -> Result<f64> {
    let z: Vec<C64> = x
        .iter()
        .map(|&xj| ep.wp(C64::new(xj, 0.0)))
        .collect::<Result<_>>()?;
    let a = rational_to_f64(&g.a);
    let mut s = 0.0;
    for j in 0..z.len() {
        for k in (j + 1)..z.len() {
            s += a * log_abs_c(z[j] - z[k], "wp(x_j) - wp(x_k)")?;
        }
        for i in 0..3 {
            s += rational_to_f64(&g.b[i + 1]) * log_abs_c(z[j] - ep.e[i], "wp(x_j) - e_i")?;
        }
    }
    Ok(s)
}

fn sin_pi(x: f64) -> f64 {
    (std::f64::consts::PI * x).sin()
}

fn cos_pi(x: f64) -> f64 {
    (std::f64::consts::PI * x).cos()
}

/// `log |Psi_D(x)|`, the limit of the elliptic gauge factor up to a constant.
pub fn log_psi_d(dc: &DegenerateCoupling, x: &[f64]) -> Result<f64> {
    let f = |q: &Q| rational_to_f64(q);
    let n = x.len() as f64;
    let lp = f(&dc.l) + 1.0;
    let sin_exp = -2.0 * (n - 1.0) * lp - (f(&dc.l1) + 1.0) + 2.0 * f(&dc.b_tilde);
    let a = f(&dc.a_tilde);
    let mut s = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        s += sin_exp * log_abs(sin_pi(xj), "sin(pi x_j)")?;
        s += (f(&dc.l1) + 1.0) * log_abs(cos_pi(xj), "cos(pi x_j)")?;
        s -= a / 2.0 * (2.0 * std::f64::consts::PI * xj).cos();
        for &xk in &x[j + 1..] {
            s += lp * log_abs(sin_pi(xj - xk) * sin_pi(xj + xk), "sin pi(x_j -+ x_k)")?;
        }
    }
    Ok(s)
}

/// `log |Phi_D(x)|`.
pub fn log_phi_d(dc: &DegenerateCoupling, x: &[f64]) -> Result<f64> {
    let f = |q: &Q| rational_to_f64(q);
    let lp = f(&dc.l) + 1.0;
    let a = f(&dc.a_tilde);
    let mut s = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        s += (f(&dc.l0) + 1.0) * log_abs(sin_pi(xj), "sin(pi x_j)")?;
        s += (f(&dc.l1) + 1.0) * log_abs(cos_pi(xj), "cos(pi x_j)")?;
        s -= a / 2.0 * (2.0 * std::f64::consts::PI * xj).cos();
        for &xk in &x[j + 1..] {
            s += lp * log_abs(sin_pi(xj - xk) * sin_pi(xj + xk), "sin pi(x_j -+ x_k)")?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeLimitRow {
    pub p: f64,
    /// `[|Phi| / |Psi_D|](x) / [|Phi| / |Psi_D|](x2)`.
    pub two_point_ratio: f64,
    pub deviation: f64,
}

/// Two-point test that `Phi(wp(x)) / Psi_D(x)` tends to an `x`-independent
/// constant as `p -> 0`, at real points.
pub fn gauge_limit_check(
    dc: &DegenerateCoupling,
    ps: &[f64],
    x: &[f64],
    x2: &[f64],
) -> Result<Vec<GaugeLimitRow>> {
    if x.len() != dc.n || x2.len() != dc.n {
        return Err(QesError::InvalidParameter(format!(
            "probe points must have {} coordinates",
            dc.n
        )));
    }
    exec::try_map(ps, |&p| {
        let ep = EllipticParams::from_real_nome(p)?;
        let g = limit_gauge(dc, &q_from_f64(p)?)?;
        let at =
            |y: &[f64]| -> Result<f64> { Ok(log_phi_modulus(&g, &ep, y)? - log_psi_d(dc, y)?) };
        let two_point_ratio = (at(x)? - at(x2)?).exp();
        Ok(GaugeLimitRow {
            p,
            two_point_ratio,
            deviation: (two_point_ratio - 1.0).abs(),
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpectrumRow {
    pub p: f64,
    /// `E_i - E_0` of the elliptic model, sorted by real part.
    pub elliptic_gaps: Vec<C64>,
    pub degenerate_gaps: Vec<C64>,
    /// `max_i |gap difference| / max_i |degenerate gap|`; zero without gaps.
    pub discrepancy: f64,
}

fn gaps(mut ev: Vec<C64>) -> Vec<C64> {
    linalg::sort_complex(&mut ev);
    ev.iter().skip(1).map(|e| e - ev[0]).collect()
}

/// Compares eigenvalue gaps of the elliptic Hamiltonian on `W_L^sym` at
/// nome `p` (couplings `l2`, `l3` from [`coupling_limit_map`]) with those of
/// the degenerate model.
pub fn limit_spectrum_check(dc: &DegenerateCoupling, ps: &[f64]) -> Result<Vec<LimitSpectrumRow>> {
    dc.check_constraints()?;
    let degenerate_gaps = gaps(degenerate_spectrum(dc)?);
    let scale = degenerate_gaps.iter().map(|g| g.norm()).fold(0.0, f64::max);
    exec::try_map(ps, |&p| {
        let ep = EllipticParams::from_real_nome(p)?;
        let g = limit_gauge(dc, &q_from_f64(p)?)?;
        if g.degree() != Some(dc.big_l) {
            return Err(QesError::ConstraintViolated(format!(
                "elliptic degree {} differs from L = {}",
                g.d, dc.big_l
            )));
        }
        let m = hamiltonian_matrix(&g, &ep.e)?;
        let elliptic_gaps = gaps(linalg::eigenvalues(&m.to_dmatrix())?.eigenvalues);
        let diff = elliptic_gaps
            .iter()
            .zip(&degenerate_gaps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        Ok(LimitSpectrumRow {
            p,
            elliptic_gaps,
            degenerate_gaps: degenerate_gaps.clone(),
            discrepancy: if scale > 0.0 { diff / scale } else { 0.0 },
        })
    })
}

/// Ranks of sampled `W^(D),sym_L`, of the `t(x) = pi^2/sin^2(pi x) - pi^2/3`
/// family times `Psi_D`, and of their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanCheck {
    pub dim: usize,
    pub rank_w: usize,
    pub rank_w_tilde: usize,
    pub rank_combined: usize,
}

impl SpanCheck {
    pub fn spans_agree(&self) -> bool {
        self.rank_w == self.dim && self.rank_w_tilde == self.dim && self.rank_combined == self.dim
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let mut m = m.clone();
    for j in 0..m.ncols() {
        let nrm = m.column(j).norm();
        if nrm > 0.0 {
            m.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

/// Samples both families at real points in `(0.05, 0.45)^N` and compares
/// spans through numerical ranks.
pub fn w_tilde_span_check(dc: &DegenerateCoupling, samples: usize, seed: u64) -> Result<SpanCheck> {
    let labels: Vec<Partition> = partitions_in_box(dc.n, dc.big_l);
    let dim = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::new();
    while points.len() < samples.max(2 * dim) {
        let x: Vec<f64> = (0..dc.n).map(|_| rng.random_range(0.05..0.45)).collect();
        let separated = (0..dc.n).all(|j| ((j + 1)..dc.n).all(|k| (x[j] - x[k]).abs() > 0.02));
        if separated {
            points.push(x);
        }
    }
    let orbit_sum = |lambda: &Partition, vals: &[f64]| -> Result<f64> {
        Ok(msym_expand(lambda, dc.n)?
            .iter()
            .map(|e| {
                e.iter()
                    .zip(vals)
                    .map(|(&m, v)| v.powi(m as i32))
                    .product::<f64>()
            })
            .sum())
    };
    let mut w = DMatrix::zeros(points.len(), dim);
    let mut wt = DMatrix::zeros(points.len(), dim);
    for (r, x) in points.iter().enumerate() {
        // common positive scale so both families stay comparable
        let base = log_phi_d(dc, x)?;
        let phi = (log_phi_d(dc, x)? - base).exp();
        let psi = (log_psi_d(dc, x)? - base).exp();
        let u: Vec<f64> = x.iter().map(|&t| sin_pi(t).powi(2)).collect();
        let t: Vec<f64> = u.iter().map(|&v| PI2 / v - PI2 / 3.0).collect();
        for (c, lambda) in labels.iter().enumerate() {
            w[(r, c)] = phi * orbit_sum(lambda, &u)?;
            wt[(r, c)] = psi * orbit_sum(lambda, &t)?;
        }
    }
    let mut both = DMatrix::zeros(points.len(), 2 * dim);
    both.columns_mut(0, dim).copy_from(&w);
    both.columns_mut(dim, dim).copy_from(&wt);
    Ok(SpanCheck {
        dim,
        rank_w: numerical_rank(&w),
        rank_w_tilde: numerical_rank(&wt),
        rank_combined: numerical_rank(&both),
    })
}
