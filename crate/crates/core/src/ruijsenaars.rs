//! The lowest Ruijsenaars difference operator `Y_1`, its level-`k` theta
//! spaces, the map to gauged polynomial spaces and the non-relativistic
//! limit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conserved::{coefficient_values, hamiltonian_operator, OperatorCouplings};
use crate::elliptic::EllipticParams;
use crate::error::{QesError, Result};
use crate::exec;
use crate::inozemtsev::{binomial, GaugeChoice};
use crate::linalg;
use crate::operator::OperatorMatrix;
use crate::ring::rational_to_f64;
use crate::sympoly::{msym_expand, partitions_in_box, Partition};

type C64 = Complex64;

/// Denominators below this modulus are refused.
pub const DENOMINATOR_TOL: f64 = 1e-12;

/// Relative singular-value floor for theta-basis independence.
pub const RANK_TOL: f64 = 1e-9;

/// `pi_p` acting on `0..4`: `id, (01)(23), (02)(13), (03)(12)`.
const PI_TABLE: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]];

/// Which `nu_r + nubar_r` carries which gauge exponent `b_i` in the limit
/// map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexPairing {
    /// `b_0 <-> nu_1, b_1 <-> nu_2, b_2 <-> nu_3, b_3 <-> nu_0`.
    Printed,
    /// `b_r <-> nu_r`.
    Untwisted,
}

impl IndexPairing {
    /// The gauge index `i` with `b_i = -(nu_r + nubar_r) / 2 kappa`.
    pub fn gauge_index(&self, r: usize) -> usize {
        match self {
            IndexPairing::Printed => (r + 3) % 4,
            IndexPairing::Untwisted => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuijsenaarsParams {
    pub n: usize,
    pub kappa: C64,
    pub mu: C64,
    pub nu: [C64; 4],
    pub nubar: [C64; 4],
}

impl RuijsenaarsParams {
    pub fn new(n: usize, kappa: C64, mu: C64, nu: [C64; 4], nubar: [C64; 4]) -> Result<Self> {
        if kappa.norm() == 0.0 {
            return Err(QesError::InvalidParameter("kappa must be nonzero".into()));
        }
        if n == 0 {
            return Err(QesError::InvalidParameter(
                "particle number must be at least 1".into(),
            ));
        }
        Ok(RuijsenaarsParams {
            n,
            kappa,
            mu,
            nu,
            nubar,
        })
    }

    /// `(2(N-1) mu + sum_r (nu_r + nubar_r)) / kappa`.
    pub fn level(&self) -> C64 {
        let s: C64 = self.nu.iter().chain(&self.nubar).sum();
        (2.0 * (self.n as f64 - 1.0) * self.mu + s) / self.kappa
    }

    /// The level when it is within `tol` of an even nonnegative integer.
    pub fn even_level(&self, tol: f64) -> Option<u32> {
        let k = self.level();
        let r = k.re.round();
        if (k - r).norm() <= tol && r >= 0.0 && (r as i64) % 2 == 0 {
            Some(r as u32)
        } else {
            None
        }
    }

    /// Parameters with `mu = -a kappa` and `nu_r + nubar_r = -2 kappa b_i`,
    /// split as `nu_r = split * (nu_r + nubar_r)`.
    pub fn from_gauge(setup: &LimitSetup, kappa: f64) -> Result<Self> {
        let k = C64::new(kappa, 0.0);
        let sum: [C64; 4] =
            std::array::from_fn(|r| -2.0 * k * setup.b[setup.pairing.gauge_index(r)]);
        let nu = sum.map(|s| s * setup.split);
        let nubar = sum.map(|s| s * (1.0 - setup.split));
        Self::new(setup.n, k, -k * setup.a, nu, nubar)
    }
}

/// Gauge exponents held fixed along a `kappa -> 0` sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetup {
    pub n: usize,
    pub a: f64,
    pub b: [f64; 4],
    pub pairing: IndexPairing,
    /// Fraction of `nu_r + nubar_r` carried by `nu_r`.
    pub split: f64,
}

impl LimitSetup {
    pub fn new(n: usize, a: f64, b: [f64; 4], pairing: IndexPairing) -> Self {
        LimitSetup {
            n,
            a,
            b,
            pairing,
            split: 0.5,
        }
    }
}

fn ratio(num: C64, den: C64, what: &str) -> Result<C64> {
    if den.norm() < DENOMINATOR_TOL {
        return Err(QesError::DenominatorNearZero {
            what: what.to_string(),
            tol: DENOMINATOR_TOL,
        });
    }
    Ok(num / den)
}

/// Coefficients of `Y_1` at a point: `sum_j plus_j t_j(kappa) + minus_j t_j(-kappa) + diagonal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Y1Coefficients {
    pub plus: Vec<C64>,
    pub minus: Vec<C64>,
    pub diagonal: C64,
}

pub fn y1_coefficients(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    x: &[C64],
) -> Result<Y1Coefficients> {
    let n = x.len();
    let th = |j: usize, y: C64| ep.theta(j, y);
    let (kappa, mu) = (rp.kappa, rp.mu);
    let half = kappa / 2.0;
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for j in 0..n {
        let mut cp = C64::new(1.0, 0.0);
        let mut cm = C64::new(1.0, 0.0);
        for k in 0..n {
            if k == j {
                continue;
            }
            let (dm, dp) = (x[j] - x[k], x[j] + x[k]);
            cp *= ratio(th(1, dm - mu)?, th(1, dm)?, "theta_1(x_j - x_k)")?;
            cp *= ratio(th(1, dp - mu)?, th(1, dp)?, "theta_1(x_j + x_k)")?;
            cm *= ratio(th(1, dp + mu)?, th(1, dp)?, "theta_1(x_j + x_k)")?;
            cm *= ratio(th(1, dm + mu)?, th(1, dm)?, "theta_1(x_j - x_k)")?;
        }
        for r in 0..4 {
            let t = r + 1;
            let (nu, nb) = (rp.nu[r], rp.nubar[r]);
            let base = th(t, x[j])?;
            cp *= ratio(th(t, x[j] - nu)?, base, "theta(x_j)")?;
            cp *= ratio(
                th(t, x[j] + half - nb)?,
                th(t, x[j] + half)?,
                "theta(x_j + kappa/2)",
            )?;
            cm *= ratio(th(t, x[j] + nu)?, base, "theta(x_j)")?;
            cm *= ratio(
                th(t, x[j] - half + nb)?,
                th(t, x[j] - half)?,
                "theta(x_j - kappa/2)",
            )?;
        }
        plus.push(cp);
        minus.push(cm);
    }
    let zero = C64::new(0.0, 0.0);
    let theta1_prime0 = ep.theta_prime(1, zero)?;
    let pref = ratio(
        C64::new(2.0, 0.0) * (std::f64::consts::PI / theta1_prime0).powi(2),
        th(1, mu)? * th(1, kappa + mu)?,
        "theta_1(mu) theta_1(kappa + mu)",
    )?;
    let mut diagonal = zero;
    for (p, pi) in PI_TABLE.iter().enumerate() {
        let mut c = pref;
        for r in 0..4 {
            c *= th(r + 1, half + rp.nu[pi[r]])? * th(r + 1, rp.nubar[pi[r]])?;
        }
        for xj in x {
            c *= ratio(
                th(p + 1, xj - half - mu)?,
                th(p + 1, xj - half)?,
                "theta(x_j - kappa/2)",
            )?;
            c *= ratio(
                th(p + 1, xj + half + mu)?,
                th(p + 1, xj + half)?,
                "theta(x_j + kappa/2)",
            )?;
        }
        diagonal += c;
    }
    Ok(Y1Coefficients {
        plus,
        minus,
        diagonal,
    })
}

fn shifted(x: &[C64], j: usize, s: C64) -> Vec<C64> {
    let mut y = x.to_vec();
    y[j] += s;
    y
}

/// `(Y_1 f)(x)` by direct summation of the three groups.
pub fn y1_apply(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    f: &dyn Fn(&[C64]) -> Result<C64>,
    x: &[C64],
) -> Result<C64> {
    let c = y1_coefficients(rp, ep, x)?;
    let mut v = c.diagonal * f(x)?;
    for j in 0..x.len() {
        v += c.plus[j] * f(&shifted(x, j, rp.kappa))?;
        v += c.minus[j] * f(&shifted(x, j, -rp.kappa))?;
    }
    Ok(v)
}

/// `theta_1`-type index of the factor carrying `b_i` in the theta gauge
/// `Theta(x)`: `b_0 -> theta_1, b_1 -> theta_2, b_2 -> theta_3, b_3 -> theta_0`.
const THETA_OF_B: [usize; 4] = [1, 2, 3, 0];

/// `Theta(x) / Theta(y)` as a product of principal powers of factor ratios;
/// single-valued for `y` near `x`.
pub fn theta_gauge_ratio(
    a: f64,
    b: &[f64; 4],
    ep: &EllipticParams,
    x: &[C64],
    y: &[C64],
) -> Result<C64> {
    let n = x.len();
    let mut v = C64::new(1.0, 0.0);
    for j in 0..n {
        for k in (j + 1)..n {
            for (px, py) in [(x[j] - x[k], y[j] - y[k]), (x[j] + x[k], y[j] + y[k])] {
                v *= ratio(ep.theta(1, px)?, ep.theta(1, py)?, "theta_1 pair factor")?.powf(a);
            }
        }
        for i in 0..4 {
            let t = THETA_OF_B[i];
            v *= ratio(ep.theta(t, x[j])?, ep.theta(t, y[j])?, "theta gauge factor")?
                .powf(2.0 * b[i]);
        }
    }
    Ok(v)
}

/// `(Theta Y_1 Theta^{-1} f)(x)`.
pub fn conjugated_y1_apply(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    a: f64,
    b: &[f64; 4],
    f: &dyn Fn(&[C64]) -> Result<C64>,
    x: &[C64],
) -> Result<C64> {
    let c = y1_coefficients(rp, ep, x)?;
    let mut v = c.diagonal * f(x)?;
    for j in 0..x.len() {
        for (coef, s) in [(c.plus[j], rp.kappa), (c.minus[j], -rp.kappa)] {
            let y = shifted(x, j, s);
            v += coef * theta_gauge_ratio(a, b, ep, x, &y)? * f(&y)?;
        }
    }
    Ok(v)
}

/// Symmetrized products of one-variable level-`k` theta functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBasis {
    pub n: usize,
    pub k: u32,
    /// One-variable members `prod_i theta_i^{2 e_i}` by exponent `e` over
    /// `(theta_0, theta_1, theta_2, theta_3)`.
    pub one_variable: Vec<[u32; 4]>,
    /// Member labels: padded parts index into `one_variable`.
    pub labels: Vec<Partition>,
    /// Smallest over largest singular value of the sampled,
    /// column-equilibrated evaluation matrix.
    pub rank_certificate: f64,
}

impl ThetaBasis {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    fn one_variable_values(&self, ep: &EllipticParams, x: C64) -> Result<Vec<C64>> {
        let th: Vec<C64> = (0..4).map(|i| ep.theta(i, x)).collect::<Result<_>>()?;
        Ok(self
            .one_variable
            .iter()
            .map(|e| (0..4).map(|i| (th[i] * th[i]).powi(e[i] as i32)).product())
            .collect())
    }

    /// Values of every member at `x`.
    pub fn eval_all(&self, ep: &EllipticParams, x: &[C64]) -> Result<Vec<C64>> {
        let per_var: Vec<Vec<C64>> = x
            .iter()
            .map(|&xj| self.one_variable_values(ep, xj))
            .collect::<Result<_>>()?;
        self.labels
            .iter()
            .map(|label| {
                Ok(msym_expand(label, self.n)?
                    .iter()
                    .map(|e| {
                        e.iter()
                            .enumerate()
                            .map(|(j, &i)| per_var[j][i as usize])
                            .product::<C64>()
                    })
                    .sum())
            })
            .collect()
    }

    pub fn eval(&self, ep: &EllipticParams, member: usize, x: &[C64]) -> Result<C64> {
        Ok(self.eval_all(ep, x)?[member])
    }
}

/// Gaussian weight `exp(-pi k sum (Im x_j)^2 / Im tau)` that brings level-`k`
/// theta functions to unit scale.
pub fn level_weight(k: f64, ep: &EllipticParams, x: &[C64]) -> f64 {
    let s: f64 = x.iter().map(|xj| xj.im * xj.im).sum();
    (-std::f64::consts::PI * k * s / ep.tau.im).exp()
}

fn equilibrated_singular_ratio(m: &DMatrix<C64>) -> f64 {
    let mut m = m.clone();
    for j in 0..m.ncols() {
        let nrm = m.column(j).norm();
        if nrm > 0.0 {
            m.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smax > 0.0 {
        smin / smax
    } else {
        0.0
    }
}

fn sample_points(n: usize, ep: &EllipticParams, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    let v: f64 = rng.random_range(-0.5..0.5);
                    C64::new(u, 0.0) + ep.tau * v
                })
                .collect()
        })
        .collect()
}

fn evaluation_matrix(
    basis: &ThetaBasis,
    ep: &EllipticParams,
    points: &[Vec<C64>],
) -> Result<DMatrix<C64>> {
    let rows = exec::try_map(points, |x| {
        let w = level_weight(basis.k as f64, ep, x);
        Ok::<_, QesError>(
            basis
                .eval_all(ep, x)?
                .into_iter()
                .map(|v| v * w)
                .collect::<Vec<C64>>(),
        )
    })?;
    Ok(DMatrix::from_fn(points.len(), basis.dim(), |p, a| {
        rows[p][a]
    }))
}

/// Basis of `Th_k^{W(B_N)}`: one-variable members
/// `theta_2^{2(j-1)} theta_3^{2(l-j+1)}`, `l = k/2`, symmetrized over the
/// variables; falls back to degree-`l` monomials in the squared thetas when
/// the sampled rank falls short.
pub fn theta_basis(n: usize, k: u32, ep: &EllipticParams) -> Result<ThetaBasis> {
    if k % 2 != 0 {
        return Err(QesError::InvalidParameter(format!(
            "theta level k = {k} must be even"
        )));
    }
    let l = k / 2;
    theta_basis_with_candidates(
        n,
        k,
        ep,
        (1..=l + 1).map(|j| [0, 0, j - 1, l + 1 - j]).collect(),
    )
}

/// As [`theta_basis`] with explicit one-variable candidates, each an exponent
/// vector of squared thetas summing to `k/2`.
pub fn theta_basis_with_candidates(
    n: usize,
    k: u32,
    ep: &EllipticParams,
    candidates: Vec<[u32; 4]>,
) -> Result<ThetaBasis> {
    if k % 2 != 0 {
        return Err(QesError::InvalidParameter(format!(
            "theta level k = {k} must be even"
        )));
    }
    let l = k / 2;
    if candidates.len() != l as usize + 1 || candidates.iter().any(|e| e.iter().sum::<u32>() != l) {
        return Err(QesError::InvalidParameter(format!(
            "need {} candidates of total degree {l}",
            l + 1
        )));
    }
    let dim = binomial(n as u64 + l as u64, n as u64) as usize;
    let points = sample_points(n, ep, 2 * dim + 8, 0x7e7a);
    let make = |one: Vec<[u32; 4]>| ThetaBasis {
        n,
        k,
        one_variable: one,
        labels: partitions_in_box(n, l),
        rank_certificate: 0.0,
    };
    let mut basis = make(candidates);
    basis.rank_certificate = equilibrated_singular_ratio(&evaluation_matrix(&basis, ep, &points)?);
    if basis.rank_certificate > RANK_TOL {
        return Ok(basis);
    }
    // greedy selection among all degree-l monomials in the squared thetas
    let mut pool = Vec::new();
    for e0 in 0..=l {
        for e1 in 0..=l - e0 {
            for e2 in 0..=l - e0 - e1 {
                pool.push([e0, e1, e2, l - e0 - e1 - e2]);
            }
        }
    }
    let xs: Vec<Vec<C64>> = sample_points(1, ep, 2 * pool.len() + 8, 0x7e7b);
    let mut chosen: Vec<[u32; 4]> = Vec::new();
    for cand in pool {
        let mut trial = chosen.clone();
        trial.push(cand);
        let probe = ThetaBasis {
            n: 1,
            k,
            one_variable: trial.clone(),
            labels: (0..trial.len() as u32)
                .map(|i| Partition::new(vec![i]))
                .collect(),
            rank_certificate: 0.0,
        };
        if equilibrated_singular_ratio(&evaluation_matrix(&probe, ep, &xs)?) > RANK_TOL {
            chosen = trial;
        }
        if chosen.len() == l as usize + 1 {
            break;
        }
    }
    if chosen.len() < l as usize + 1 {
        return Err(QesError::RankDeficient {
            rank: chosen.len(),
            expected: l as usize + 1,
        });
    }
    let mut basis = make(chosen);
    basis.rank_certificate = equilibrated_singular_ratio(&evaluation_matrix(&basis, ep, &points)?);
    if basis.rank_certificate <= RANK_TOL {
        return Err(QesError::RankDeficient {
            rank: 0,
            expected: dim,
        });
    }
    Ok(basis)
}

/// `(|f(x + n tau) e^{2 pi i k ((x|n) + (n|n) tau / 2)} - f(x)|, |f(x + n) - f(x)|)`.
pub fn quasiperiodicity_check(
    f: &dyn Fn(&[C64]) -> Result<C64>,
    k: f64,
    x: &[C64],
    n: &[i64],
    ep: &EllipticParams,
) -> Result<(f64, f64)> {
    let fx = f(x)?;
    let xn: C64 = x.iter().zip(n).map(|(xi, &ni)| xi * ni as f64).sum();
    let nn: f64 = n.iter().map(|&ni| (ni * ni) as f64).sum();
    let y: Vec<C64> = x
        .iter()
        .zip(n)
        .map(|(xi, &ni)| xi + ep.tau * ni as f64)
        .collect();
    let phase = (C64::new(0.0, 2.0 * std::f64::consts::PI * k) * (xn + ep.tau * nn / 2.0)).exp();
    let tau_res = (f(&y)? * phase - fx).norm();
    let z: Vec<C64> = x.iter().zip(n).map(|(xi, &ni)| xi + ni as f64).collect();
    let one_res = (f(&z)? - fx).norm();
    Ok((tau_res, one_res))
}

/// Whether every theta denominator of `Y_1` stays `margin` away from its
/// zero set at `x`.
pub fn is_generic_theta_point(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    x: &[C64],
    margin: f64,
) -> bool {
    let n = x.len();
    let half = rp.kappa / 2.0;
    for j in 0..n {
        for s in [-1.0, 0.0, 1.0] {
            for i in 0..4 {
                if ep.lattice_distance(x[j] + s * half + ep.half_period(i)) < margin {
                    return false;
                }
            }
        }
        for k in (j + 1)..n {
            if ep.lattice_distance(x[j] - x[k]) < margin
                || ep.lattice_distance(x[j] + x[k]) < margin
            {
                return false;
            }
        }
    }
    true
}

/// Reproducible points `u + v tau`, `u in (0,1)`, `v in (-1/2, 1/2)`, generic
/// for `Y_1`.
pub fn theta_points(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    count: usize,
    seed: u64,
    margin: f64,
) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<C64> = (0..rp.n)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                let v: f64 = rng.random_range(-0.5..0.5);
                C64::new(u, 0.0) + ep.tau * v
            })
            .collect();
        if is_generic_theta_point(rp, ep, &x, margin) {
            out.push(x);
        }
    }
    out
}

fn theta_labels_check(basis: &ThetaBasis, points: &[Vec<C64>]) -> Result<()> {
    if points.len() < 2 * basis.dim() {
        return Err(QesError::InvalidParameter(format!(
            "{} points for a space of dimension {}; need at least {}",
            points.len(),
            basis.dim(),
            2 * basis.dim()
        )));
    }
    Ok(())
}

/// Least-squares matrix of `Y_1` on the theta basis. Closure is reported
/// through `closure_residual`, never as an error.
pub fn verify_y1_invariance(
    rp: &RuijsenaarsParams,
    ep: &EllipticParams,
    basis: &ThetaBasis,
    points: &[Vec<C64>],
) -> Result<OperatorMatrix<C64>> {
    theta_labels_check(basis, points)?;
    let k = basis.k as f64;
    let rows = exec::try_map(points, |x| {
        let w = level_weight(k, ep, x);
        let c = y1_coefficients(rp, ep, x)?;
        let here = basis.eval_all(ep, x)?;
        let mut image: Vec<C64> = here.iter().map(|v| c.diagonal * v).collect();
        for j in 0..x.len() {
            for (coef, s) in [(c.plus[j], rp.kappa), (c.minus[j], -rp.kappa)] {
                let vals = basis.eval_all(ep, &shifted(x, j, s))?;
                for (acc, v) in image.iter_mut().zip(vals) {
                    *acc += coef * v;
                }
            }
        }
        Ok::<_, QesError>((
            here.into_iter().map(|v| v * w).collect::<Vec<_>>(),
            image.into_iter().map(|v| v * w).collect::<Vec<_>>(),
        ))
    })?;
    let dim = basis.dim();
    let a = DMatrix::from_fn(points.len(), dim, |p, i| rows[p].0[i]);
    let b = DMatrix::from_fn(points.len(), dim, |p, i| rows[p].1[i]);
    let fit = linalg::least_squares(&a, &b, linalg::MAX_CONDITION)?;
    Ok(OperatorMatrix::from_dmatrix(
        basis.labels.clone(),
        &fit.solution,
        fit.max_residual(),
    ))
}

/// Smooth probe functions with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `prod_j cos(2 pi x_j)`.
    Cosine,
    /// `sum_j wp(x_j + shift)`.
    ShiftedWp {
        shift: C64,
    },
    Constant,
}

impl TestFunction {
    pub fn value(&self, ep: &EllipticParams, x: &[C64]) -> Result<C64> {
        self.derivative(ep, x, &vec![0; x.len()])
    }

    /// `d^alpha f(x)` for per-variable orders up to 2.
    pub fn derivative(&self, ep: &EllipticParams, x: &[C64], alpha: &[u32]) -> Result<C64> {
        let tp = 2.0 * std::f64::consts::PI;
        match self {
            TestFunction::Constant => Ok(if alpha.iter().all(|&a| a == 0) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }),
            TestFunction::Cosine => Ok(x
                .iter()
                .zip(alpha)
                .map(|(&xj, &a)| match a % 4 {
                    0 => (tp * xj).cos() * tp.powi(a as i32),
                    1 => -(tp * xj).sin() * tp,
                    2 => -(tp * xj).cos() * tp * tp,
                    _ => (tp * xj).sin() * tp.powi(3),
                })
                .product()),
            TestFunction::ShiftedWp { shift } => {
                let active: Vec<usize> = (0..x.len()).filter(|&j| alpha[j] > 0).collect();
                match active.len() {
                    0 => x.iter().map(|&xj| ep.wp(xj + shift)).sum(),
                    1 => {
                        let j = active[0];
                        Ok(ep.wp_derivatives(x[j] + shift, alpha[j] as usize)?[alpha[j] as usize])
                    }
                    _ => Ok(C64::new(0.0, 0.0)),
                }
            }
        }
    }
}

/// One row of the non-relativistic convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub kappa: f64,
    pub error: f64,
    /// `log2(|E(previous)| / |E(this)|) / log2(previous kappa / this kappa)`.
    pub observed_order: Option<f64>,
}

/// `E(kappa) = [(-Theta Y_1 Theta^{-1} f)(x) + C_0 f(x)] / kappa^2 - (H f)(x)`
/// with `C_0` eliminated at the second probe `x2`.
pub fn nonrelativistic_limit_check(
    setup: &LimitSetup,
    ep: &EllipticParams,
    f: &TestFunction,
    x: &[C64],
    x2: &[C64],
    kappas: &[f64],
) -> Result<Vec<LimitRow>> {
    let (n, a, b) = (setup.n, setup.a, setup.b);
    if x.len() != n || x2.len() != n {
        return Err(QesError::InvalidParameter(format!(
            "probe points must have {n} coordinates"
        )));
    }
    let rat = |v: f64| num_rational::BigRational::from_float(v).unwrap_or_default();
    let couplings = OperatorCouplings {
        n,
        pair: rat(a * (a - 1.0)),
        external: b.map(|bi| rat(2.0 * bi * (2.0 * bi - 1.0))),
    };
    let h = hamiltonian_operator(&couplings);
    let h_apply = |y: &[C64]| -> Result<C64> {
        let mut v = C64::new(0.0, 0.0);
        for (c, alpha) in coefficient_values(&h, y, ep)? {
            v += c * f.derivative(ep, y, &alpha)?;
        }
        Ok(v)
    };
    let fv = |y: &[C64]| f.value(ep, y);
    let mut rows: Vec<LimitRow> = Vec::new();
    for &kappa in kappas {
        let rp = RuijsenaarsParams::from_gauge(setup, kappa)?;
        let g = |y: &[C64]| -> Result<C64> {
            let conj = conjugated_y1_apply(&rp, ep, a, &b, &fv, y)?;
            Ok(-conj / (kappa * kappa) - h_apply(y)?)
        };
        let (g1, g2) = (g(x)?, g(x2)?);
        let (f1, f2) = (fv(x)?, fv(x2)?);
        if f2.norm() < DENOMINATOR_TOL {
            return Err(QesError::DenominatorNearZero {
                what: "test function at the second probe".into(),
                tol: DENOMINATOR_TOL,
            });
        }
        let error = (g1 - g2 * f1 / f2).norm();
        let observed_order = rows
            .last()
            .map(|prev| (prev.error / error).log2() / (prev.kappa / kappa).log2());
        rows.push(LimitRow {
            kappa,
            error,
            observed_order,
        });
    }
    Ok(rows)
}

/// `|Theta(x)| / (|Phi(wp(x))| |prod_j theta_1(x_j)^{-2d}|)` for real
/// exponents; constant in `x` when `Theta / Phi` is a constant multiple of
/// `prod theta_1^{-2d}`.
pub fn theta_phi_modulus_ratio(g: &GaugeChoice, ep: &EllipticParams, x: &[C64]) -> Result<f64> {
    let a = rational_to_f64(&g.a);
    let b: Vec<f64> = g.b.iter().map(rational_to_f64).collect();
    let d = rational_to_f64(&g.d);
    let n = x.len();
    let z: Vec<C64> = x.iter().map(|&xj| ep.wp(xj)).collect::<Result<_>>()?;
    let mut log = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            log +=
                a * (ep.theta(1, x[j] - x[k])?.norm().ln() + ep.theta(1, x[j] + x[k])?.norm().ln());
            log -= a * (z[j] - z[k]).norm().ln();
        }
        for i in 0..4 {
            log += 2.0 * b[i] * ep.theta(THETA_OF_B[i], x[j])?.norm().ln();
        }
        for i in 0..3 {
            log -= b[i + 1] * (z[j] - ep.e[i]).norm().ln();
        }
        log += 2.0 * d * ep.theta(1, x[j])?.norm().ln();
    }
    Ok(log.exp())
}

/// Change-of-basis matrix of `f -> Theta f` from `Th_{2k}` into `W_k^sym`.
#[derive(Debug, Clone)]
pub struct PhiIsomorphism {
    /// Column `alpha` holds the `m_mu` coefficients of the image of the
    /// `alpha`-th theta member, divided by `Phi`.
    pub matrix: OperatorMatrix<C64>,
    pub singular_values: Vec<f64>,
}

impl PhiIsomorphism {
    pub fn singular_ratio(&self) -> f64 {
        let smax = self.singular_values.iter().copied().fold(0.0, f64::max);
        let smin = self
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if smax > 0.0 {
            smin / smax
        } else {
            0.0
        }
    }
}

/// Fits `g = f Theta / Phi(wp(x))` in `V_k^sym` for every theta member `f`,
/// using `Theta / Phi = const * prod_j theta_1(x_j)^{-2k}`.
pub fn phi_isomorphism(
    g: &GaugeChoice,
    ep: &EllipticParams,
    basis: &ThetaBasis,
    points: &[Vec<C64>],
) -> Result<PhiIsomorphism> {
    let k = g.admissible_degree()?;
    if basis.k != 2 * k || basis.n != g.n {
        return Err(QesError::InvalidParameter(format!(
            "theta basis (N={}, level {}) does not match gauge degree {k} with N={}",
            basis.n, basis.k, g.n
        )));
    }
    theta_labels_check(basis, points)?;
    let labels = partitions_in_box(g.n, k);
    let rows = exec::try_map(points, |x| {
        let mut factor = C64::new(1.0, 0.0);
        for &xj in x.iter() {
            factor *=
                ratio(C64::new(1.0, 0.0), ep.theta(1, xj)?, "theta_1(x_j)")?.powi(2 * k as i32);
        }
        let z: Vec<C64> = x.iter().map(|&xj| ep.wp(xj)).collect::<Result<_>>()?;
        let monomials: Vec<C64> = labels
            .iter()
            .map(|mu| {
                Ok(msym_expand(mu, g.n)?
                    .iter()
                    .map(|e| {
                        e.iter()
                            .zip(&z)
                            .map(|(&p, zj)| zj.powi(p as i32))
                            .product::<C64>()
                    })
                    .sum())
            })
            .collect::<Result<_>>()?;
        let targets: Vec<C64> = basis
            .eval_all(ep, x)?
            .into_iter()
            .map(|v| v * factor)
            .collect();
        Ok::<_, QesError>((monomials, targets))
    })?;
    let dim = labels.len();
    let a = DMatrix::from_fn(points.len(), dim, |p, i| rows[p].0[i]);
    let b = DMatrix::from_fn(points.len(), dim, |p, i| rows[p].1[i]);
    let fit = linalg::least_squares(&a, &b, linalg::MAX_CONDITION)?;
    let singular_values = fit.solution.singular_values().iter().copied().collect();
    Ok(PhiIsomorphism {
        matrix: OperatorMatrix::from_dmatrix(labels, &fit.solution, fit.max_residual()),
        singular_values,
    })
}
