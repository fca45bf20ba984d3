//! Commuting operators of the elliptic model for `N <= 3` as normal-ordered
//! symbolic operators in the generators `wp^{(m)}(x_j - x_k)`,
//! `wp^{(m)}(x_j + x_k)` and `wp^{(m)}(x_j + omega_i)`, with exact rational
//! coefficients, plus their restriction to gauged polynomial spaces by
//! collocation.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::EllipticParams;
use crate::error::{QesError, Result};
use crate::exec;
use crate::inozemtsev::GaugeChoice;
use crate::jet::Jet;
use crate::linalg;
use crate::operator::OperatorMatrix;
use crate::ring::{rational, rational_to_f64};
use crate::sympoly::{msym_expand, partitions_in_box, Partition};

type C64 = Complex64;

/// Largest particle number with supported operator construction.
pub const MAX_N: usize = 3;

/// Default margin kept between collocation points and singular loci.
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Signed permutation `x_m -> signs[m] x_{sigma[m]}` (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPermutation {
    pub sigma: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        SignedPermutation {
            sigma: (0..n).collect(),
            signs: vec![1; n],
        }
    }

    /// `prod signs`, equal to 1 exactly on the even-sign subgroup.
    pub fn epsilon(&self) -> i8 {
        self.signs.iter().product()
    }

    /// `(w x)_m = signs[m] x_{sigma[m]}`.
    pub fn apply_point(&self, x: &[C64]) -> Vec<C64> {
        (0..x.len())
            .map(|m| x[self.sigma[m]] * self.signs[m] as f64)
            .collect()
    }

    /// The map `x -> self(other(x))`.
    pub fn compose(&self, other: &SignedPermutation) -> SignedPermutation {
        let n = self.sigma.len();
        SignedPermutation {
            sigma: (0..n).map(|m| other.sigma[self.sigma[m]]).collect(),
            signs: (0..n)
                .map(|m| self.signs[m] * other.signs[self.sigma[m]])
                .collect(),
        }
    }

    /// All permutations of `0..n`.
    pub fn symmetric_group(n: usize) -> Vec<SignedPermutation> {
        permutations(n)
            .into_iter()
            .map(|sigma| SignedPermutation {
                sigma,
                signs: vec![1; n],
            })
            .collect()
    }

    /// All `2^n n!` signed permutations.
    pub fn hyperoctahedral_group(n: usize) -> Vec<SignedPermutation> {
        let mut out = Vec::new();
        for sigma in permutations(n) {
            for mask in 0..(1u32 << n) {
                let signs = (0..n)
                    .map(|m| if mask >> m & 1 == 1 { -1 } else { 1 })
                    .collect();
                out.push(SignedPermutation {
                    sigma: sigma.clone(),
                    signs,
                });
            }
        }
        out
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Unordered partitions of `items` into nonempty blocks.
pub fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    for p in set_partitions(rest) {
        for b in 0..p.len() {
            let mut q = p.clone();
            q[b].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

/// Argument of a Weierstrass factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arg {
    /// `x_p - x_q` with `p < q`.
    Diff(usize, usize),
    /// `x_p + x_q` with `p < q`.
    Sum(usize, usize),
    /// `x_p + omega_i`.
    Shift(usize, usize),
}

impl Arg {
    pub fn eval(&self, x: &[C64], params: &EllipticParams) -> C64 {
        match *self {
            Arg::Diff(p, q) => x[p] - x[q],
            Arg::Sum(p, q) => x[p] + x[q],
            Arg::Shift(p, i) => x[p] + params.half_period(i),
        }
    }

    /// `d arg / d x_j`.
    fn slope(&self, j: usize) -> i64 {
        match *self {
            Arg::Diff(p, q) => (j == p) as i64 - (j == q) as i64,
            Arg::Sum(p, q) => (j == p) as i64 + (j == q) as i64,
            Arg::Shift(p, _) => (j == p) as i64,
        }
    }
}

/// `wp^{(order)}(arg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub arg: Arg,
    pub order: u32,
}

/// Canonical form of `wp^{(m)}(s_p x_p + s_q x_q)` as a sign and a factor,
/// using evenness of `wp`.
fn pair_factor(p: usize, sp: i8, q: usize, sq: i8, m: u32) -> (i64, Factor) {
    let odd = if m % 2 == 1 { -1 } else { 1 };
    // flip the overall sign so that the coefficient of the smaller index is +1
    let (lo, s_lo, hi, s_hi) = if p < q {
        (p, sp, q, sq)
    } else {
        (q, sq, p, sp)
    };
    let (sign, same) = if s_lo > 0 {
        (1, s_hi > 0)
    } else {
        (odd, s_hi < 0)
    };
    let arg = if same {
        Arg::Sum(lo, hi)
    } else {
        Arg::Diff(lo, hi)
    };
    (sign, Factor { arg, order: m })
}

impl Factor {
    pub fn wp(arg: Arg) -> Self {
        Factor { arg, order: 0 }
    }

    /// `wp(x_p - x_q)` for any distinct `p, q`.
    pub fn diff(p: usize, q: usize) -> Self {
        pair_factor(p, 1, q, -1, 0).1
    }

    /// Image under `x_m -> signs[m] x_{sigma[m]}`, with its sign.
    fn act(&self, w: &SignedPermutation) -> (i64, Factor) {
        let m = self.order;
        let odd = if m % 2 == 1 { -1 } else { 1 };
        match self.arg {
            Arg::Diff(p, q) => pair_factor(w.sigma[p], w.signs[p], w.sigma[q], -w.signs[q], m),
            Arg::Sum(p, q) => pair_factor(w.sigma[p], w.signs[p], w.sigma[q], w.signs[q], m),
            Arg::Shift(p, i) => {
                // wp(-x + omega) = wp(x + omega) since 2 omega is a period
                let sign = if w.signs[p] > 0 { 1 } else { odd };
                (
                    sign,
                    Factor {
                        arg: Arg::Shift(w.sigma[p], i),
                        order: m,
                    },
                )
            }
        }
    }
}

type Key = (Vec<Factor>, Vec<u32>);

/// Normal-ordered differential operator `sum c * prod(factors) * d^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    pub n: usize,
    terms: BTreeMap<Key, BigRational>,
}

/// One term of an [`EllipticOperator`].
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperatorTerm {
    pub coefficient: BigRational,
    pub factors: Vec<Factor>,
    pub derivative: Vec<u32>,
}

impl EllipticOperator {
    pub fn zero(n: usize) -> Self {
        EllipticOperator {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(n: usize, c: BigRational) -> Self {
        let mut op = EllipticOperator::zero(n);
        op.add_term(Vec::new(), vec![0; n], c);
        op
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, BigRational::one())
    }

    /// Multiplication by `c * prod(factors)`.
    pub fn function(n: usize, factors: Vec<Factor>, c: BigRational) -> Self {
        let mut op = EllipticOperator::zero(n);
        op.add_term(factors, vec![0; n], c);
        op
    }

    pub fn derivative(n: usize, alpha: Vec<u32>) -> Self {
        let mut op = EllipticOperator::zero(n);
        op.add_term(Vec::new(), alpha, BigRational::one());
        op
    }

    fn add_term(&mut self, mut factors: Vec<Factor>, alpha: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        factors.sort();
        let key = (factors, alpha);
        let entry = self
            .terms
            .entry(key.clone())
            .or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = EllipticOperatorTerm> + '_ {
        self.terms.iter().map(|((f, a), c)| EllipticOperatorTerm {
            coefficient: c.clone(),
            factors: f.clone(),
            derivative: a.clone(),
        })
    }

    /// Highest total derivative order.
    pub fn order(&self) -> u32 {
        self.terms
            .keys()
            .map(|(_, a)| a.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// Highest derivative order in a single variable.
    pub fn max_partial_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|(_, a)| a.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Highest Weierstrass derivative order among the factors.
    pub fn max_factor_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|(f, _)| f.iter().map(|x| x.order))
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &EllipticOperator) -> EllipticOperator {
        let mut out = self.clone();
        for ((f, a), c) in &other.terms {
            out.add_term(f.clone(), a.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &BigRational) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n);
        for ((f, a), c) in &self.terms {
            out.add_term(f.clone(), a.clone(), c * s);
        }
        out
    }

    /// The operator product `self * other`.
    pub fn compose(&self, other: &EllipticOperator) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n);
        let mut cache: HashMap<(Vec<Factor>, Vec<u32>), Vec<(Vec<Factor>, BigRational)>> =
            HashMap::new();
        for ((f1, a1), c1) in &self.terms {
            for ((f2, a2), c2) in &other.terms {
                // Leibniz: d^a (g u) = sum_{b <= a} binom(a, b) (d^b g) d^{a-b} u
                for b in sub_multi_indices(a1) {
                    let weight: i64 = a1.iter().zip(&b).map(|(&x, &y)| binom(x, y)).product();
                    let derived = cache
                        .entry((f2.clone(), b.clone()))
                        .or_insert_with(|| monomial_derivative(f2, &b))
                        .clone();
                    let alpha: Vec<u32> = (0..self.n).map(|j| a1[j] - b[j] + a2[j]).collect();
                    for (g, s) in derived {
                        let mut factors = f1.clone();
                        factors.extend(g);
                        out.add_term(factors, alpha.clone(), c1 * c2 * &s * rational(weight, 1));
                    }
                }
            }
        }
        out
    }

    /// Image under the substitution `x_m -> signs[m] x_{sigma[m]}`,
    /// `d_m -> signs[m] d_{sigma[m]}`.
    pub fn act(&self, w: &SignedPermutation) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n);
        for ((f, a), c) in &self.terms {
            let mut sign: i64 = 1;
            let mut factors = Vec::with_capacity(f.len());
            for x in f {
                let (s, y) = x.act(w);
                sign *= s;
                factors.push(y);
            }
            let mut alpha = vec![0; self.n];
            for m in 0..self.n {
                alpha[w.sigma[m]] = a[m];
                if w.signs[m] < 0 && a[m] % 2 == 1 {
                    sign = -sign;
                }
            }
            out.add_term(factors, alpha, c * rational(sign, 1));
        }
        out
    }

    /// `sum_w weight(w) w(self)` over `group`.
    fn symmetrize(&self, group: &[SignedPermutation], signed: bool) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n);
        for w in group {
            let img = self.act(w);
            out = if signed && w.epsilon() < 0 {
                out.add(&img.scale(&rational(-1, 1)))
            } else {
                out.add(&img)
            };
        }
        out
    }
}

fn binom(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn sub_multi_indices(a: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &x in a {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=x).map(move |y| {
                    let mut w = v.clone();
                    w.push(y);
                    w
                })
            })
            .collect();
    }
    out
}

/// `d^b prod(factors)` as a sum of monomials.
fn monomial_derivative(factors: &[Factor], b: &[u32]) -> Vec<(Vec<Factor>, BigRational)> {
    let mut current: BTreeMap<Vec<Factor>, BigRational> = BTreeMap::new();
    current.insert(factors.to_vec(), BigRational::one());
    for (j, &times) in b.iter().enumerate() {
        for _ in 0..times {
            let mut next: BTreeMap<Vec<Factor>, BigRational> = BTreeMap::new();
            for (f, c) in &current {
                for (idx, x) in f.iter().enumerate() {
                    let s = x.arg.slope(j);
                    if s == 0 {
                        continue;
                    }
                    let mut g = f.clone();
                    g[idx].order += 1;
                    g.sort();
                    let e = next.entry(g).or_insert_with(BigRational::zero);
                    *e += c * rational(s, 1);
                }
            }
            next.retain(|_, c| !c.is_zero());
            current = next;
        }
    }
    current.into_iter().collect()
}

/// Signed permutations of the variables `idx` inside `0..n`, identity
/// elsewhere.
fn local_group(n: usize, idx: &[usize]) -> Vec<SignedPermutation> {
    SignedPermutation::hyperoctahedral_group(idx.len())
        .into_iter()
        .map(|w| {
            let mut g = SignedPermutation::identity(n);
            for (t, &v) in idx.iter().enumerate() {
                g.sigma[v] = idx[w.sigma[t]];
                g.signs[v] = w.signs[t];
            }
            g
        })
        .collect()
}

fn chain(idx: &[usize]) -> Vec<Factor> {
    idx.windows(2).map(|w| Factor::diff(w[0], w[1])).collect()
}

fn factorial(n: usize) -> BigRational {
    rational((1..=n as i64).product(), 1)
}

/// Coupling data `l(l+1)` and `l_i(l_i+1)` entering the operators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCouplings {
    pub n: usize,
    pub pair: BigRational,
    pub external: [BigRational; 4],
}

impl OperatorCouplings {
    pub fn from_gauge(g: &GaugeChoice) -> Self {
        OperatorCouplings {
            n: g.n,
            pair: g.pair_coupling(),
            external: g.external_couplings(),
        }
    }
}

/// Builders for the symmetrized pieces, all over `n` variables.
struct Pieces<'a> {
    c: &'a OperatorCouplings,
}

impl Pieces<'_> {
    fn n(&self) -> usize {
        self.c.n
    }

    fn s(&self, idx: &[usize], shift: Option<usize>) -> EllipticOperator {
        let mut f = chain(idx);
        if let Some(i) = shift {
            f.push(Factor::wp(Arg::Shift(idx[0], i)));
        }
        EllipticOperator::function(self.n(), f, BigRational::one())
            .symmetrize(&local_group(self.n(), idx), false)
    }

    fn t_open(&self, idx: &[usize], shift: Option<usize>) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n());
        for part in set_partitions(idx) {
            let mu = part.len();
            let sign = if mu % 2 == 1 { 1 } else { -1 };
            let mut prod = EllipticOperator::identity(self.n());
            for block in &part {
                prod = prod.compose(&self.s(block, shift));
            }
            out = out.add(&prod.scale(&(factorial(mu - 1) * rational(sign, 1))));
        }
        out
    }

    fn t(&self, idx: &[usize]) -> EllipticOperator {
        let k = idx.len() as i32;
        let mut sum = EllipticOperator::zero(self.n());
        for i in 0..4 {
            let w = &self.c.external[i] / rational(2, 1);
            if w.is_zero() {
                continue;
            }
            sum = sum.add(&self.t_open(idx, Some(i)).scale(&w));
        }
        let pre = -num_traits::pow::pow(-self.c.pair.clone(), (k - 1) as usize);
        sum.scale(&pre)
    }

    fn q(&self, idx: &[usize]) -> EllipticOperator {
        let mut out = EllipticOperator::zero(self.n());
        for part in set_partitions(idx) {
            let mut prod = EllipticOperator::identity(self.n());
            for block in &part {
                prod = prod.compose(&self.t(block));
            }
            out = out.add(&prod);
        }
        out
    }

    fn delta(&self, idx: &[usize]) -> EllipticOperator {
        let n = self.n();
        let k = idx.len();
        if k == 0 {
            return EllipticOperator::identity(n);
        }
        let group = local_group(n, idx);
        let mut out = EllipticOperator::zero(n);
        for j in 0..=k / 2 {
            let factors: Vec<Factor> = (0..j)
                .map(|t| Factor::diff(idx[2 * t], idx[2 * t + 1]))
                .collect();
            let mut alpha = vec![0; n];
            for &v in &idx[2 * j..] {
                alpha[v] = 1;
            }
            let mut base = EllipticOperator::zero(n);
            base.add_term(factors, alpha, BigRational::one());
            let weight = num_traits::pow::pow(self.c.pair.clone(), j)
                / (rational(1i64 << k, 1) * factorial(j) * factorial(k - 2 * j));
            out = out.add(&base.symmetrize(&group, true).scale(&weight));
        }
        out
    }
}

/// The commuting operator `P_k` (order `2k`) for `N <= 3`.
pub fn build_conserved_operator(c: &OperatorCouplings, k: usize) -> Result<EllipticOperator> {
    let n = c.n;
    if n == 0 || n > MAX_N {
        return Err(QesError::UnsupportedN(n));
    }
    if k == 0 || k > n {
        return Err(QesError::InvalidParameter(format!(
            "operator index k = {k} outside 1..={n}"
        )));
    }
    let pieces = Pieces { c };
    // P_{N - blocks}
    let blocks = n - k;
    let perms = SignedPermutation::symmetric_group(n);
    let mut out = EllipticOperator::zero(n);
    for i in blocks..=n {
        let head: Vec<usize> = (0..i).collect();
        let partitions: Vec<Vec<Vec<usize>>> = set_partitions(&head)
            .into_iter()
            .filter(|p| p.len() == blocks)
            .collect();
        for j in i..=n {
            let middle: Vec<usize> = (i..j).collect();
            let tail: Vec<usize> = (j..n).collect();
            let q = pieces.q(&middle);
            let d = pieces.delta(&tail);
            let d2 = d.compose(&d);
            let weight = num_traits::pow::pow(-c.pair.clone(), i - blocks)
                / (rational(1i64 << blocks, 1)
                    * factorial(i)
                    * factorial(j - i)
                    * factorial(n - j));
            for part in &partitions {
                let mut prod = EllipticOperator::identity(n);
                for block in part {
                    prod = prod.compose(&pieces.t_open(block, None));
                }
                let term = prod.compose(&q).compose(&d2).scale(&weight);
                out = out.add(&term.symmetrize(&perms, false));
            }
        }
    }
    Ok(out)
}

/// The Hamiltonian as a term list:
/// `-sum d_j^2 + 2 l(l+1) sum_{j<k} (wp(x_j - x_k) + wp(x_j + x_k)) + sum_j sum_i l_i(l_i+1) wp(x_j + omega_i)`.
pub fn hamiltonian_operator(c: &OperatorCouplings) -> EllipticOperator {
    let n = c.n;
    let mut h = EllipticOperator::zero(n);
    for j in 0..n {
        let mut alpha = vec![0; n];
        alpha[j] = 2;
        h.add_term(Vec::new(), alpha, rational(-1, 1));
        for k in (j + 1)..n {
            let two = rational(2, 1) * &c.pair;
            h.add_term(vec![Factor::wp(Arg::Diff(j, k))], vec![0; n], two.clone());
            h.add_term(vec![Factor::wp(Arg::Sum(j, k))], vec![0; n], two);
        }
        for i in 0..4 {
            h.add_term(
                vec![Factor::wp(Arg::Shift(j, i))],
                vec![0; n],
                c.external[i].clone(),
            );
        }
    }
    h
}

/// Numerical values of every term coefficient at a point, paired with the
/// derivative multi-index.
pub fn coefficient_values(
    op: &EllipticOperator,
    x: &[C64],
    params: &EllipticParams,
) -> Result<Vec<(C64, Vec<u32>)>> {
    let top = op.max_factor_order() as usize;
    let mut cache: HashMap<Arg, Vec<C64>> = HashMap::new();
    let mut out: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
    for ((factors, alpha), c) in &op.terms {
        let mut v = C64::new(rational_to_f64(c), 0.0);
        for f in factors {
            if !cache.contains_key(&f.arg) {
                let ders = params.wp_derivatives(f.arg.eval(x, params), top)?;
                cache.insert(f.arg, ders);
            }
            v *= cache[&f.arg][f.order as usize];
        }
        *out.entry(alpha.clone()).or_insert(C64::new(0.0, 0.0)) += v;
    }
    Ok(out.into_iter().map(|(a, v)| (v, a)).collect())
}

/// `x -> Phi(wp(x)) m_lambda(wp(x))` for a gauge choice.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugedBasisFunction {
    pub gauge: GaugeChoice,
    pub label: Partition,
}

/// Jet of `(Phi / Phi(x)) m_lambda` composed with `z_j = wp(x_j)` at `x`.
pub fn gauged_jet(
    gauge: &GaugeChoice,
    label: &Partition,
    x: &[C64],
    params: &EllipticParams,
    cap: u32,
) -> Result<Jet> {
    let n = x.len();
    let z: Vec<Jet> = x
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            Ok(Jet::univariate(
                n,
                cap,
                j,
                &params.wp_taylor(xj, cap as usize)?,
            ))
        })
        .collect::<Result<_>>()?;
    let phi = gauge_jet(gauge, &z, params)?;
    Ok(&phi * &msym_jet(label, &z)?)
}

fn gauge_jet(gauge: &GaugeChoice, z: &[Jet], params: &EllipticParams) -> Result<Jet> {
    let n = z.len();
    let cap = z[0].cap();
    let a = rational_to_f64(&gauge.a);
    let mut phi = Jet::constant(n, cap, C64::new(1.0, 0.0));
    let tiny = params.pole_radius();
    for j in 0..n {
        for k in (j + 1)..n {
            let d = &z[j] - &z[k];
            if d.value().norm() < tiny {
                return Err(QesError::BranchPointProximity {
                    what: format!("z_{} = z_{}", j + 1, k + 1),
                    radius: tiny,
                });
            }
            if a != 0.0 {
                phi = &phi * &d.normalized_power(a);
            }
        }
        for i in 0..3 {
            let b = rational_to_f64(&gauge.b[i + 1]);
            let d = &z[j] - &Jet::constant(n, cap, params.e[i]);
            if d.value().norm() < tiny {
                return Err(QesError::BranchPointProximity {
                    what: format!("z_{} = e_{}", j + 1, i + 1),
                    radius: tiny,
                });
            }
            if b != 0.0 {
                phi = &phi * &d.normalized_power(b);
            }
        }
    }
    Ok(phi)
}

fn msym_jet(label: &Partition, z: &[Jet]) -> Result<Jet> {
    let n = z.len();
    let cap = z[0].cap();
    let top = label.max_part();
    let powers: Vec<Vec<Jet>> = z
        .iter()
        .map(|zj| {
            let mut v = vec![Jet::constant(n, cap, C64::new(1.0, 0.0))];
            for e in 1..=top as usize {
                let next = &v[e - 1] * zj;
                v.push(next);
            }
            v
        })
        .collect();
    let mut out = Jet::zero(n, cap);
    for exps in msym_expand(label, n)? {
        let mut t = Jet::constant(n, cap, C64::new(1.0, 0.0));
        for (j, &e) in exps.iter().enumerate() {
            if e > 0 {
                t = &t * &powers[j][e as usize];
            }
        }
        out = &out + &t;
    }
    Ok(out)
}

/// `[op (Phi m_lambda)] / Phi` at `x`.
pub fn apply_operator(
    op: &EllipticOperator,
    f: &GaugedBasisFunction,
    x: &[C64],
    params: &EllipticParams,
) -> Result<C64> {
    let coeffs = coefficient_values(op, x, params)?;
    let jet = gauged_jet(&f.gauge, &f.label, x, params, op.max_partial_order().max(1))?;
    Ok(contract(&coeffs, &jet))
}

fn contract(coeffs: &[(C64, Vec<u32>)], jet: &Jet) -> C64 {
    coeffs
        .iter()
        .map(|(c, alpha)| c * jet.derivative(alpha).unwrap_or(C64::new(0.0, 0.0)))
        .sum()
}

/// Whether `x` keeps `margin` away from every singular locus of the
/// coefficients and of the gauge factor.
pub fn is_generic_point(x: &[C64], params: &EllipticParams, margin: f64) -> bool {
    let n = x.len();
    for j in 0..n {
        for i in 0..4 {
            if params.lattice_distance(x[j] + params.half_period(i)) < margin {
                return false;
            }
        }
        for k in (j + 1)..n {
            if params.lattice_distance(x[j] - x[k]) < margin
                || params.lattice_distance(x[j] + x[k]) < margin
            {
                return false;
            }
        }
    }
    true
}

/// Reproducible pseudo-random points `u + v tau`, `u, v in (0, 1)`, kept
/// `margin` away from singular loci.
pub fn collocation_points(
    n: usize,
    params: &EllipticParams,
    count: usize,
    seed: u64,
    margin: f64,
) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<C64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                let v: f64 = rng.random_range(0.0..1.0);
                C64::new(u, 0.0) + params.tau * v
            })
            .collect();
        if is_generic_point(&x, params, margin) {
            out.push(x);
        }
    }
    out
}

/// Number of collocation points used by default for a space of dimension
/// `dim`.
pub fn default_point_count(dim: usize) -> usize {
    3 * dim + 6
}

/// Restriction of `op` (conjugated by the gauge factor) to `V_d^sym`, fitted
/// by least squares over the collocation points.
pub fn collocate(
    op: &EllipticOperator,
    gauge: &GaugeChoice,
    params: &EllipticParams,
    points: &[Vec<C64>],
) -> Result<OperatorMatrix<C64>> {
    let d = gauge.admissible_degree()?;
    let n = gauge.n;
    let basis = partitions_in_box(n, d);
    let dim = basis.len();
    if points.len() < 2 * dim {
        return Err(QesError::InvalidParameter(format!(
            "{} collocation points for a space of dimension {dim}; need at least {}",
            points.len(),
            2 * dim
        )));
    }
    let cap = op.max_partial_order().max(1);
    let rows: Vec<(Vec<C64>, Vec<C64>)> = exec::try_map(points, |x| {
        let coeffs = coefficient_values(op, x, params)?;
        let z: Vec<C64> = x.iter().map(|&xj| params.wp(xj)).collect::<Result<_>>()?;
        let mut lhs = Vec::with_capacity(dim);
        let mut rhs = Vec::with_capacity(dim);
        for lambda in &basis {
            lhs.push(msym_value(lambda, &z)?);
            let jet = gauged_jet(gauge, lambda, x, params, cap)?;
            rhs.push(contract(&coeffs, &jet));
        }
        Ok((lhs, rhs))
    })?;
    let a = DMatrix::from_fn(points.len(), dim, |p, mu| rows[p].0[mu]);
    let b = DMatrix::from_fn(points.len(), dim, |p, lambda| rows[p].1[lambda]);
    let fit = linalg::least_squares(&a, &b, linalg::MAX_CONDITION)?;
    let residual = fit.max_residual();
    Ok(OperatorMatrix::from_dmatrix(basis, &fit.solution, residual))
}

fn msym_value(lambda: &Partition, z: &[C64]) -> Result<C64> {
    Ok(msym_expand(lambda, z.len())?
        .iter()
        .map(|e| {
            e.iter()
                .zip(z)
                .map(|(&k, zj)| zj.powi(k as i32))
                .product::<C64>()
        })
        .sum())
}

/// Collocated matrix of `P_k` on `V_d^sym` for the couplings of `gauge`.
pub fn conserved_matrix(
    k: usize,
    gauge: &GaugeChoice,
    params: &EllipticParams,
    points: &[Vec<C64>],
) -> Result<OperatorMatrix<C64>> {
    let op = build_conserved_operator(&OperatorCouplings::from_gauge(gauge), k)?;
    collocate(&op, gauge, params, points)
}

/// Least-squares `A, B` with `p ~ A h + B I`, and the relative Frobenius
/// residual of the fit.
#[derive(Debug, Clone, Copy)]
pub struct AffineFit {
    pub a: C64,
    pub b: C64,
    pub residual: f64,
}

pub fn affine_fit(p: &DMatrix<C64>, h: &DMatrix<C64>) -> Result<AffineFit> {
    let n = p.nrows();
    let m = n * n;
    let design = DMatrix::from_fn(m, 2, |r, c| {
        let (i, j) = (r / n, r % n);
        if c == 0 {
            h[(i, j)]
        } else if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let rhs = DMatrix::from_fn(m, 1, |r, _| p[(r / n, r % n)]);
    let fit = linalg::least_squares(&design, &rhs, linalg::MAX_CONDITION)?;
    Ok(AffineFit {
        a: fit.solution[(0, 0)],
        b: fit.solution[(1, 0)],
        residual: fit.relative_residuals[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn couplings(n: usize, pair: i64, ext: [i64; 4]) -> OperatorCouplings {
        OperatorCouplings {
            n,
            pair: rational(pair, 1),
            external: ext.map(|x| rational(x, 1)),
        }
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15];
        for (k, &b) in bell.iter().enumerate() {
            let items: Vec<usize> = (0..k).collect();
            assert_eq!(set_partitions(&items).len(), b);
        }
    }

    #[test]
    fn group_orders_and_composition() {
        assert_eq!(SignedPermutation::hyperoctahedral_group(3).len(), 48);
        let g = SignedPermutation::hyperoctahedral_group(3);
        let x = vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.5), C64::new(0.7, -0.1)];
        for a in g.iter().step_by(7) {
            for b in g.iter().step_by(5) {
                let lhs = a.compose(b).apply_point(&x);
                let rhs = a.apply_point(&b.apply_point(&x));
                assert_eq!(lhs, rhs);
                assert_eq!(a.compose(b).epsilon(), a.epsilon() * b.epsilon());
            }
        }
    }

    #[test]
    fn small_pieces_match_hand_expansions() {
        let c = couplings(2, 6, [2, 0, 6, 12]);
        let pieces = Pieces { c: &c };
        assert_eq!(
            pieces.s(&[0], None),
            EllipticOperator::scalar(2, rational(2, 1))
        );
        let mut s12 = EllipticOperator::zero(2);
        s12.add_term(
            vec![Factor::wp(Arg::Diff(0, 1))],
            vec![0, 0],
            rational(4, 1),
        );
        s12.add_term(vec![Factor::wp(Arg::Sum(0, 1))], vec![0, 0], rational(4, 1));
        assert_eq!(pieces.s(&[0, 1], None), s12);
        assert_eq!(
            pieces.t_open(&[0, 1], None),
            s12.add(&EllipticOperator::scalar(2, rational(-4, 1)))
        );
        assert_eq!(
            pieces.delta(&[0]),
            EllipticOperator::derivative(2, vec![1, 0])
        );
        let mut d12 = EllipticOperator::derivative(2, vec![1, 1]);
        d12.add_term(
            vec![Factor::wp(Arg::Diff(0, 1))],
            vec![0, 0],
            rational(6, 1),
        );
        d12.add_term(
            vec![Factor::wp(Arg::Sum(0, 1))],
            vec![0, 0],
            rational(-6, 1),
        );
        assert_eq!(pieces.delta(&[0, 1]), d12);
    }

    #[test]
    fn first_operator_is_affine_in_the_hamiltonian() {
        let c = couplings(1, 0, [2, 6, 0, 12]);
        let p1 = build_conserved_operator(&c, 1).unwrap();
        assert_eq!(p1, hamiltonian_operator(&c).scale(&rational(-1, 1)));
        let c = couplings(2, 6, [2, 6, 0, 12]);
        let p1 = build_conserved_operator(&c, 1).unwrap();
        let expected = hamiltonian_operator(&c)
            .scale(&rational(-1, 1))
            .add(&EllipticOperator::scalar(2, rational(12, 1)));
        assert_eq!(p1, expected);
    }

    #[test]
    fn operators_are_hyperoctahedrally_invariant() {
        for n in 1..=3 {
            let c = couplings(n, 2, [0, 2, 6, 2]);
            for k in 1..=n {
                let p = build_conserved_operator(&c, k).unwrap();
                assert_eq!(p.order(), 2 * k as u32);
                assert!(p.max_partial_order() <= 2);
                for w in SignedPermutation::hyperoctahedral_group(n) {
                    assert_eq!(p.act(&w), p, "N={n} k={k} w={w:?}");
                }
            }
        }
    }
}
