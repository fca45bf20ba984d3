//! Gauge choices, the gauged Hamiltonian on `V_d^sym`, quasi-exact spectra,
//! the square-integrability criterion and the integer-coupling dimension
//! census.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{QesError, Result};
use crate::exec;
use crate::linalg::{self, Spectrum};
use crate::operator::OperatorMatrix;
use crate::ring::{rational, rational_to_f64, ESym, Ring};
use crate::sympoly::{
    add_uni, apply_cross_term, apply_gauged_term, partitions_in_box, poly_from_roots, scale_uni,
    Partition, SymPoly, UniPoly,
};

type C64 = Complex64;

/// Distance below which a fractional or negative power is refused.
pub const BRANCH_RADIUS: f64 = 1e-10;

/// Particle number and the coupling constants `l, l_0..l_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub n: usize,
    pub l: BigRational,
    pub ls: [BigRational; 4],
}

impl CouplingSet {
    pub fn new(n: usize, l: BigRational, ls: [BigRational; 4]) -> Result<Self> {
        if n == 0 {
            return Err(QesError::InvalidParameter(
                "particle number must be at least 1".into(),
            ));
        }
        Ok(CouplingSet { n, l, ls })
    }

    pub fn from_integers(n: usize, l: i64, ls: [i64; 4]) -> Result<Self> {
        Self::new(n, rational(l, 1), ls.map(|x| rational(x, 1)))
    }
}

/// Exponents `(a, b_0..b_3)` of the gauge factor with `d = -((N-1)a + sum b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeChoice {
    pub n: usize,
    pub a: BigRational,
    pub b: [BigRational; 4],
    pub d: BigRational,
}

impl GaugeChoice {
    pub fn new(n: usize, a: BigRational, b: [BigRational; 4]) -> Self {
        let nm1 = rational(n as i64 - 1, 1);
        let sum_b = b.iter().fold(BigRational::zero(), |acc, x| acc + x);
        let d = -(nm1 * &a + sum_b);
        GaugeChoice { n, a, b, d }
    }

    /// `d` when it is a nonnegative integer.
    pub fn degree(&self) -> Option<u32> {
        if self.d.is_integer() && !self.d.is_negative() {
            self.d.to_integer().to_u32()
        } else {
            None
        }
    }

    pub fn admissible_degree(&self) -> Result<u32> {
        self.degree().ok_or_else(|| {
            QesError::InadmissibleGauge(format!("d = {} is not a nonnegative integer", self.d))
        })
    }

    /// `l(l+1) = a(a-1)`, the pair coupling this gauge conjugates.
    pub fn pair_coupling(&self) -> BigRational {
        &self.a * (&self.a - BigRational::one())
    }

    /// `l_i(l_i+1) = 2b_i(2b_i-1)`.
    pub fn external_couplings(&self) -> [BigRational; 4] {
        self.b.clone().map(|b| {
            let two_b = rational(2, 1) * b;
            &two_b * (&two_b - BigRational::one())
        })
    }

    pub fn is_compatible_with(&self, c: &CouplingSet) -> bool {
        let half = rational(1, 2);
        let a_ok = self.n == 1 || self.a == -c.l.clone() || self.a == &c.l + BigRational::one();
        let b_ok = (0..4).all(|i| {
            self.b[i] == -c.ls[i].clone() * &half
                || self.b[i] == (&c.ls[i] + BigRational::one()) * &half
        });
        self.n == c.n && a_ok && b_ok
    }
}

/// All sign choices `a in {-l, l+1}`, `b_i in {-l_i/2, (l_i+1)/2}` with
/// `d` a nonnegative integer. For `N = 1` the exponent `a` does not enter and
/// is fixed to `-l`.
pub fn enumerate_gauge_choices(c: &CouplingSet) -> Vec<GaugeChoice> {
    let half = rational(1, 2);
    let a_opts: Vec<BigRational> = if c.n >= 2 {
        vec![-c.l.clone(), &c.l + BigRational::one()]
    } else {
        vec![-c.l.clone()]
    };
    let b_opts: Vec<[BigRational; 2]> =
        c.ls.iter()
            .map(|li| [-li.clone() * &half, (li + BigRational::one()) * &half])
            .collect();
    let mut out = Vec::new();
    for a in &a_opts {
        for mask in 0..16u32 {
            let b: [BigRational; 4] =
                std::array::from_fn(|i| b_opts[i][((mask >> (3 - i)) & 1) as usize].clone());
            let g = GaugeChoice::new(c.n, a.clone(), b);
            if g.degree().is_some() {
                out.push(g);
            }
        }
    }
    out
}

fn principal_power(w: C64, s: &BigRational, what: &str) -> Result<C64> {
    if s.is_zero() {
        return Ok(C64::new(1.0, 0.0));
    }
    let exponent_is_natural = s.is_integer() && s.is_positive();
    if !exponent_is_natural && w.norm() < BRANCH_RADIUS {
        return Err(QesError::BranchPointProximity {
            what: what.to_string(),
            radius: BRANCH_RADIUS,
        });
    }
    if exponent_is_natural {
        let k = s.to_integer().to_i32().unwrap_or(i32::MAX);
        return Ok(w.powi(k));
    }
    Ok(w.powf(rational_to_f64(s)))
}

/// `Phi(z) = prod_{j<k} (z_j - z_k)^a prod_j prod_{i=1..3} (z_j - e_i)^{b_i}`
/// with principal branches.
pub fn gauge_factor_phi(g: &GaugeChoice, z: &[C64], e: &[C64; 3]) -> Result<C64> {
    let mut value = C64::new(1.0, 0.0);
    for j in 0..z.len() {
        for k in (j + 1)..z.len() {
            value *= principal_power(z[j] - z[k], &g.a, &format!("z_{} = z_{}", j + 1, k + 1))?;
        }
        for i in 0..3 {
            value *= principal_power(
                z[j] - e[i],
                &g.b[i + 1],
                &format!("z_{} = e_{}", j + 1, i + 1),
            )?;
        }
    }
    Ok(value)
}

/// Coefficient data of the gauged Hamiltonian over a ring.
#[derive(Debug, Clone)]
pub struct GaugedHamiltonian<R: Ring> {
    pub n: usize,
    /// `P(z) = 4 (z - e_1)(z - e_2)(z - e_3)`.
    pub p: UniPoly<R>,
    /// `sum_i (2 b_i + 1/2) P(z)/(z - e_i)`.
    pub q: UniPoly<R>,
    pub two_a: R,
    /// Coefficient of `z_1 + ... + z_N`.
    pub linear: R,
    pub constant: R,
}

impl<R: Ring> GaugedHamiltonian<R> {
    pub fn new(g: &GaugeChoice, e: &[R; 3]) -> Self {
        let q_of = |x: &BigRational| R::from_rational(x);
        let four = R::from_i64(4);
        let p = scale_uni(&poly_from_roots(e), &four);
        let mut q: UniPoly<R> = Vec::new();
        for i in 0..3 {
            let others: Vec<R> = (0..3).filter(|&k| k != i).map(|k| e[k].clone()).collect();
            let w = q_of(&(rational(2, 1) * &g.b[i + 1] + rational(1, 2)));
            q = add_uni(
                &q,
                &scale_uni(&poly_from_roots(&others), &(w * four.clone())),
            );
        }
        let n = g.n as i64;
        let nm1a = rational(n - 1, 1) * &g.a;
        let [b0, b1, b2, b3] = &g.b;
        let s123 = b1 + b2 + b3;
        let linear = rational(-4, 1) * (&nm1a - b0 + &s123 + rational(1, 2)) * (&nm1a + b0 + &s123);
        let sq = |x: BigRational| R::from_rational(&(&x * &x));
        let constant = R::from_i64(4 * n)
            * (sq(b1 + b2) * e[2].clone()
                + sq(b1 + b3) * e[1].clone()
                + sq(b2 + b3) * e[0].clone())
            - R::from_rational(&(rational(4 * n * (n - 1), 1) * &g.a))
                * (e[0].clone() * q_of(b1) + e[1].clone() * q_of(b2) + e[2].clone() * q_of(b3));
        GaugedHamiltonian {
            n: g.n,
            p,
            q,
            two_a: R::from_rational(&(rational(2, 1) * &g.a)),
            linear: R::from_rational(&linear),
            constant,
        }
    }

    pub fn apply(&self, f: &SymPoly<R>) -> Result<SymPoly<R>> {
        let second = apply_gauged_term(&self.p, 2, f)?;
        let first = apply_gauged_term(&self.q, 1, f)?;
        let cross = apply_cross_term(&self.p, f)?;
        let kinetic = second.add(&first).add(&cross.scale(&self.two_a));
        let mut out = kinetic.scale(&-R::one());
        out = out.add(&f.mul_power_sum()?.scale(&self.linear));
        out = out.add(&f.scale(&self.constant));
        Ok(out)
    }
}

/// Images of every basis element of `V_d^sym` under the gauged Hamiltonian.
pub fn hamiltonian_images<R: Ring>(
    g: &GaugeChoice,
    e: &[R; 3],
) -> Result<(Vec<Partition>, Vec<SymPoly<R>>)> {
    let d = g.admissible_degree()?;
    let h = GaugedHamiltonian::new(g, e);
    let basis = partitions_in_box(g.n, d);
    let images = exec::try_map(&basis, |lambda| {
        let m = SymPoly::monomial(lambda.clone(), g.n)?;
        h.apply(&m)
    })?;
    Ok((basis, images))
}

/// Matrix of the gauged Hamiltonian on `V_d^sym`.
pub fn hamiltonian_matrix<R: Ring>(g: &GaugeChoice, e: &[R; 3]) -> Result<OperatorMatrix<R>> {
    let (basis, images) = hamiltonian_images(g, e)?;
    Ok(OperatorMatrix::from_images(basis, &images))
}

/// Outcome of the leading-coefficient law over a whole box.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingLawReport {
    pub checked: usize,
    /// Partitions whose raised coefficient differs from
    /// `-4 (L - d - 2 b_0 + 1/2)(L - d)`, or that acquire another term of
    /// max part `L + 1`.
    pub violations: Vec<Partition>,
}

/// Checks the image of every `m_lambda` with `lambda_1 = L <= d` over the
/// symbolic-`e` ring.
pub fn leading_coefficient_law(g: &GaugeChoice) -> Result<LeadingLawReport> {
    let d = g.admissible_degree()?;
    let h = GaugedHamiltonian::new(g, &ESym::triple());
    let basis = partitions_in_box(g.n, d);
    let verdicts = exec::try_map(&basis, |lambda| {
        let img = h.apply(&SymPoly::monomial(lambda.clone(), g.n)?)?;
        let l = rational(lambda.max_part() as i64 - d as i64, 1);
        let expected = rational(-4, 1) * (&l - rational(2, 1) * &g.b[0] + rational(1, 2)) * &l;
        let raised = lambda.raised();
        let mut ok =
            raised.len() > g.n || img.coefficient(&raised) == ESym::from_rational(&expected);
        for (mu, c) in &img.terms {
            if mu.max_part() == lambda.max_part() + 1 && *mu != raised && !c.is_zero() {
                ok = false;
            }
        }
        Ok::<_, QesError>(ok)
    })?;
    Ok(LeadingLawReport {
        checked: basis.len(),
        violations: basis
            .into_iter()
            .zip(verdicts)
            .filter(|(_, ok)| !ok)
            .map(|(b, _)| b)
            .collect(),
    })
}

pub fn spectrum(m: &OperatorMatrix<C64>) -> Result<Spectrum> {
    linalg::eigenvalues(&m.to_dmatrix())
}

/// Eigenvalues from the exact characteristic polynomial of a symbolic matrix,
/// evaluated at concrete half-period values and rooted numerically.
pub fn spectrum_from_characteristic_polynomial(
    m: &OperatorMatrix<crate::ring::ESym>,
    e: &[C64; 3],
) -> Result<Vec<C64>> {
    let charpoly = linalg::characteristic_polynomial(&m.entries);
    let coeffs: Vec<C64> = charpoly.iter().map(|c| c.eval(&e[0], &e[1])).collect();
    linalg::polynomial_roots(&coeffs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct L2Verdict {
    pub member: bool,
    /// Name of the first failed clause, empty when every clause holds.
    pub reason: String,
}

/// Square-integrability of `W_d^sym` on the Weyl chamber.
pub fn l2_membership(g: &GaugeChoice, c: &CouplingSet) -> Result<L2Verdict> {
    for (name, v) in [("l", &c.l), ("l0", &c.ls[0]), ("l1", &c.ls[1])] {
        if v.is_negative() {
            return Err(QesError::AssumptionViolated(format!(
                "{name} = {v} is negative"
            )));
        }
    }
    let half = rational(1, 2);
    let fail = |r: &str| {
        Ok(L2Verdict {
            member: false,
            reason: r.to_string(),
        })
    };
    if g.n >= 2 && g.a != &c.l + BigRational::one() {
        return fail("a");
    }
    if g.b[0] != (&c.ls[0] + BigRational::one()) * &half {
        return fail("b0");
    }
    if g.b[1] != (&c.ls[1] + BigRational::one()) * &half {
        return fail("b1");
    }
    if g.degree().is_none() {
        return fail("d");
    }
    Ok(L2Verdict {
        member: true,
        reason: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    pub n: usize,
    /// `sum binomial(N + d, N)` over the admissible gauge choices.
    pub total: u64,
    pub per_choice: Vec<(GaugeChoice, u64)>,
    /// Closed form for `N = 1, 2`, `None` otherwise.
    pub closed_form: Option<u64>,
}

impl DimensionReport {
    pub fn agrees(&self) -> Option<bool> {
        self.closed_form.map(|c| c == self.total)
    }
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

fn as_natural(q: &BigRational, name: &str) -> Result<u64> {
    if q.is_integer() && !q.is_negative() {
        Ok(q.to_integer().to_u64().unwrap_or(u64::MAX))
    } else {
        Err(QesError::InvalidParameter(format!(
            "{name} = {q} must be a nonnegative integer"
        )))
    }
}

/// Closed-form dimension of the direct sum for `N = 1` or `N = 2`.
pub fn closed_form_dimension(c: &CouplingSet) -> Result<Option<u64>> {
    let l = as_natural(&c.l, "l")?;
    let ls: Vec<u64> =
        c.ls.iter()
            .enumerate()
            .map(|(i, x)| as_natural(x, &format!("l{i}")))
            .collect::<Result<_>>()?;
    Ok(match c.n {
        1 => {
            let lt: u64 = ls.iter().sum();
            let k0 = *ls.iter().max().unwrap_or(&0);
            let k3 = *ls.iter().min().unwrap_or(&0);
            Some(if lt.is_even() {
                if 2 * (k0 + k3) >= lt {
                    2 * k0 + 1
                } else {
                    lt - 2 * k3 + 1
                }
            } else if 2 * k0 >= lt + 1 {
                2 * k0 + 1
            } else {
                lt + 2
            })
        }
        2 => Some((2 * l + 1).pow(2) + ls.iter().map(|x| x * (x + 1)).sum::<u64>()),
        _ => None,
    })
}

/// Enumerated dimension of the direct sum of all `W_d^sym` for integer
/// couplings, next to the closed form where one exists.
pub fn dimension_report(c: &CouplingSet) -> Result<DimensionReport> {
    let closed_form = closed_form_dimension(c)?;
    let per_choice: Vec<(GaugeChoice, u64)> = enumerate_gauge_choices(c)
        .into_iter()
        .map(|g| {
            let d = g.degree().unwrap_or(0) as u64;
            (g, binomial(c.n as u64 + d, c.n as u64))
        })
        .collect();
    let total = per_choice.iter().map(|(_, k)| k).sum();
    Ok(DimensionReport {
        n: c.n,
        total,
        per_choice,
        closed_form,
    })
}

/// Formats a rational as `p/q` (or `p` when integral).
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.to_integer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses `p/q` or an integer.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || QesError::InvalidParameter(format!("not a rational number: {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(p, q))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}
