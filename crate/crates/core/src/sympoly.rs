//! Symmetric polynomials in `z_1..z_N` in the monomial-symmetric basis.
//!
//! Operators are applied by expanding to plain monomials, acting there, and
//! collecting the result back into orbit sums with a symmetry check.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{QesError, Result};
use crate::ring::Ring;

/// Exponent partition with parts sorted non-increasing and no trailing zeros.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Partition(Vec<u32>);

impl Partition {
    /// Canonical partition from arbitrary parts (sorted, zeros dropped).
    pub fn new(mut parts: Vec<u32>) -> Self {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        while parts.last() == Some(&0) {
            parts.pop();
        }
        Partition(parts)
    }

    pub fn empty() -> Self {
        Partition(Vec::new())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest part, `0` for the empty partition.
    pub fn max_part(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn padded(&self, n_vars: usize) -> Result<Vec<u32>> {
        if self.0.len() > n_vars {
            return Err(QesError::LengthExceeded {
                len: self.0.len(),
                n_vars,
            });
        }
        let mut v = self.0.clone();
        v.resize(n_vars, 0);
        Ok(v)
    }

    /// `lambda^+`: the first part raised by one.
    pub fn raised(&self) -> Partition {
        let mut v = self.0.clone();
        if v.is_empty() {
            v.push(1);
        } else {
            v[0] += 1;
        }
        Partition(v)
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Partitions with at most `n_vars` parts, each at most `d`, in descending
/// lexicographic order of the padded exponent vectors.
pub fn partitions_in_box(n_vars: usize, d: u32) -> Vec<Partition> {
    fn rec(n: usize, cap: u32, prefix: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if prefix.len() == n {
            out.push(Partition::new(prefix.clone()));
            return;
        }
        for p in (0..=cap).rev() {
            prefix.push(p);
            rec(n, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n_vars, d, &mut Vec::new(), &mut out);
    out
}

/// The distinct permutations of the padded exponent vector of `lambda`.
pub fn msym_expand(lambda: &Partition, n_vars: usize) -> Result<Vec<Vec<u32>>> {
    let mut v = lambda.padded(n_vars)?;
    v.sort_unstable();
    let mut out = vec![v.clone()];
    while next_permutation(&mut v) {
        out.push(v.clone());
    }
    Ok(out)
}

fn next_permutation(v: &mut [u32]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Univariate polynomial given by coefficients of `1, z, z^2, ...`.
pub type UniPoly<R> = Vec<R>;

/// Polynomial in `n_vars` variables on plain monomials.
#[derive(Clone, PartialEq, Debug)]
pub struct Poly<R: Ring> {
    pub n_vars: usize,
    pub terms: BTreeMap<Vec<u32>, R>,
}

impl<R: Ring> Poly<R> {
    pub fn zero(n_vars: usize) -> Self {
        Poly {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: R) {
        if c.is_zero() {
            return;
        }
        match self.terms.remove(&exps) {
            Some(old) => {
                let s = old + c;
                if !s.is_zero() {
                    self.terms.insert(exps, s);
                }
            }
            None => {
                self.terms.insert(exps, c);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly<R>) {
        for (k, c) in &other.terms {
            self.add_term(k.clone(), c.clone());
        }
    }

    pub fn scale(&self, c: &R) -> Poly<R> {
        let mut out = Poly::zero(self.n_vars);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Poly<R>) -> Poly<R> {
        let mut out = Poly::zero(self.n_vars);
        for (a, c) in &self.terms {
            for (b, d) in &other.terms {
                let exps: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(exps, c.clone() * d.clone());
            }
        }
        out
    }

    /// `(d/dz_j)^order`.
    pub fn derivative(&self, j: usize, order: u32) -> Poly<R> {
        let mut out = Poly::zero(self.n_vars);
        for (k, c) in &self.terms {
            let e = k[j];
            if e < order {
                continue;
            }
            let falling: i64 = (0..order).map(|t| (e - t) as i64).product();
            let mut exps = k.clone();
            exps[j] -= order;
            out.add_term(exps, c.clone() * R::from_i64(falling));
        }
        out
    }

    /// Multiplication by `c(z_j)`.
    pub fn mul_univariate(&self, j: usize, c: &[R]) -> Poly<R> {
        let mut out = Poly::zero(self.n_vars);
        for (k, v) in &self.terms {
            for (deg, cd) in c.iter().enumerate() {
                if cd.is_zero() {
                    continue;
                }
                let mut exps = k.clone();
                exps[j] += deg as u32;
                out.add_term(exps, v.clone() * cd.clone());
            }
        }
        out
    }

    /// Exact quotient by `(z_j - z_k)`; a nonzero remainder is an error.
    pub fn divide_by_difference(&self, j: usize, k: usize) -> Result<Poly<R>> {
        let mut work = self.clone();
        let mut quotient = Poly::zero(self.n_vars);
        loop {
            // term with the highest power of z_j, largest key first among ties
            let lead = work
                .terms
                .iter()
                .filter(|(e, _)| e[j] > 0)
                .max_by(|(a, _), (b, _)| a[j].cmp(&b[j]).then_with(|| a.cmp(b)))
                .map(|(e, c)| (e.clone(), c.clone()));
            let Some((exps, c)) = lead else { break };
            let mut q = exps.clone();
            q[j] -= 1;
            quotient.add_term(q.clone(), c.clone());
            work.add_term(exps, -c.clone());
            let mut shifted = q;
            shifted[k] += 1;
            work.add_term(shifted, c);
        }
        let scale = self
            .terms
            .values()
            .map(|c| c.magnitude())
            .fold(0.0, f64::max);
        if work.terms.values().any(|c| !c.negligible(scale)) {
            return Err(QesError::NonCancellation { j, k });
        }
        Ok(quotient)
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Collects orbit sums back into the monomial-symmetric basis.
    pub fn collect_symmetric(&self) -> Result<SymPoly<R>> {
        let mut out = SymPoly::zero(self.n_vars);
        for (exps, c) in &self.terms {
            let lambda = Partition::new(exps.clone());
            if lambda.padded(self.n_vars)? == *exps {
                out.terms.insert(lambda, c.clone());
            }
        }
        let scale = self
            .terms
            .values()
            .map(|c| c.magnitude())
            .fold(0.0, f64::max);
        for (exps, c) in &self.terms {
            let lambda = Partition::new(exps.clone());
            match out.terms.get(&lambda) {
                Some(rep) if (rep.clone() - c.clone()).negligible(scale) => {}
                None if c.negligible(scale) => {}
                _ => {
                    return Err(QesError::NotSymmetric(format!(
                        "coefficient of z^{exps:?} differs from its orbit representative {lambda}"
                    )))
                }
            }
        }
        // orbit members that never appeared
        for (lambda, rep) in out.terms.iter() {
            for e in msym_expand(lambda, self.n_vars)? {
                if !self.terms.contains_key(&e) && !rep.negligible(scale) {
                    return Err(QesError::NotSymmetric(format!(
                        "monomial z^{e:?} missing from the orbit of {lambda}"
                    )));
                }
            }
        }
        Ok(out)
    }
}

/// Symmetric polynomial as a combination of monomial-symmetric functions.
#[derive(Clone, PartialEq, Debug)]
pub struct SymPoly<R: Ring> {
    pub n_vars: usize,
    pub terms: BTreeMap<Partition, R>,
}

impl<R: Ring> SymPoly<R> {
    pub fn zero(n_vars: usize) -> Self {
        SymPoly {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    /// The single monomial-symmetric function `m_lambda`.
    pub fn monomial(lambda: Partition, n_vars: usize) -> Result<Self> {
        lambda.padded(n_vars)?;
        let mut terms = BTreeMap::new();
        terms.insert(lambda, R::one());
        Ok(SymPoly { n_vars, terms })
    }

    pub fn add_term(&mut self, lambda: Partition, c: R) {
        if c.is_zero() {
            return;
        }
        match self.terms.remove(&lambda) {
            Some(old) => {
                let s = old + c;
                if !s.is_zero() {
                    self.terms.insert(lambda, s);
                }
            }
            None => {
                self.terms.insert(lambda, c);
            }
        }
    }

    pub fn add(&self, other: &SymPoly<R>) -> SymPoly<R> {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &R) -> SymPoly<R> {
        let mut out = SymPoly::zero(self.n_vars);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn coefficient(&self, lambda: &Partition) -> R {
        self.terms.get(lambda).cloned().unwrap_or_else(R::zero)
    }

    /// Largest part appearing in any label.
    pub fn max_part(&self) -> u32 {
        self.terms.keys().map(|p| p.max_part()).max().unwrap_or(0)
    }

    pub fn expand(&self) -> Result<Poly<R>> {
        let mut out = Poly::zero(self.n_vars);
        for (lambda, c) in &self.terms {
            for e in msym_expand(lambda, self.n_vars)? {
                out.add_term(e, c.clone());
            }
        }
        Ok(out)
    }

    /// Multiplication by the power sum `z_1 + ... + z_N`.
    pub fn mul_power_sum(&self) -> Result<SymPoly<R>> {
        let plain = self.expand()?;
        let mut out = Poly::zero(self.n_vars);
        for j in 0..self.n_vars {
            out.add_assign(&plain.mul_univariate(j, &[R::zero(), R::one()]));
        }
        out.collect_symmetric()
    }

    /// Value at a point.
    pub fn eval(&self, z: &[R]) -> Result<R> {
        let plain = self.expand()?;
        let mut total = R::zero();
        for (e, c) in &plain.terms {
            let mut t = c.clone();
            for (zi, &p) in z.iter().zip(e) {
                for _ in 0..p {
                    t = t * zi.clone();
                }
            }
            total = total + t;
        }
        Ok(total)
    }
}

/// `sum_j c(z_j) (d/dz_j)^order f`, collected back into the symmetric basis.
pub fn apply_gauged_term<R: Ring>(c: &[R], order: u32, f: &SymPoly<R>) -> Result<SymPoly<R>> {
    let plain = f.expand()?;
    let mut out = Poly::zero(f.n_vars);
    for j in 0..f.n_vars {
        out.add_assign(&plain.derivative(j, order).mul_univariate(j, c));
    }
    out.collect_symmetric()
}

/// `sum_j sum_{k != j} p(z_j)/(z_j - z_k) d/dz_j f`, computed pairwise as the
/// exact quotient `(p(z_j) f_j - p(z_k) f_k)/(z_j - z_k)`.
pub fn apply_cross_term<R: Ring>(p: &[R], f: &SymPoly<R>) -> Result<SymPoly<R>> {
    let n = f.n_vars;
    let plain = f.expand()?;
    let weighted: Vec<Poly<R>> = (0..n)
        .map(|j| plain.derivative(j, 1).mul_univariate(j, p))
        .collect();
    let mut out = Poly::zero(n);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut numerator = weighted[j].clone();
            numerator.add_assign(&weighted[k].scale(&-R::one()));
            out.add_assign(&numerator.divide_by_difference(j, k)?);
        }
    }
    out.collect_symmetric()
}

/// Coefficients of `prod (z - r_i)` from its roots.
pub fn poly_from_roots<R: Ring>(roots: &[R]) -> UniPoly<R> {
    let mut c = vec![R::one()];
    for r in roots {
        let mut next = vec![R::zero(); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] = next[i + 1].clone() + ci.clone();
            next[i] = next[i].clone() - ci.clone() * r.clone();
        }
        c = next;
    }
    c
}

pub fn scale_uni<R: Ring>(c: &[R], s: &R) -> UniPoly<R> {
    c.iter().map(|x| x.clone() * s.clone()).collect()
}

pub fn add_uni<R: Ring>(a: &[R], b: &[R]) -> UniPoly<R> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(R::zero);
            let y = b.get(i).cloned().unwrap_or_else(R::zero);
            x + y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::rational;
    use num_rational::BigRational;

    fn q(n: i64) -> BigRational {
        rational(n, 1)
    }

    #[test]
    fn box_partitions_are_ordered_and_counted() {
        let b = partitions_in_box(2, 2);
        let labels: Vec<String> = b.iter().map(|p| p.to_string()).collect();
        assert_eq!(labels, ["(2,2)", "(2,1)", "(2)", "(1,1)", "(1)", "()"]);
    }

    #[test]
    fn orbit_of_repeated_parts() {
        let orbit = msym_expand(&Partition::new(vec![1, 1]), 3).unwrap();
        assert_eq!(orbit.len(), 3);
        assert!(matches!(
            msym_expand(&Partition::new(vec![1, 1, 1]), 2),
            Err(QesError::LengthExceeded { len: 3, n_vars: 2 })
        ));
    }

    #[test]
    fn derivative_of_power_sum() {
        let f = SymPoly::<BigRational>::monomial(Partition::new(vec![1]), 2).unwrap();
        let g = apply_gauged_term(&[q(1)], 1, &f).unwrap();
        assert_eq!(g.coefficient(&Partition::empty()), q(2));
        assert_eq!(g.terms.len(), 1);
        let h = apply_gauged_term(&[q(0), q(0), q(1)], 1, &f).unwrap();
        assert_eq!(h.coefficient(&Partition::new(vec![2])), q(1));
        assert_eq!(h.terms.len(), 1);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut p = Poly::<BigRational>::zero(2);
        p.add_term(vec![1, 0], q(1));
        assert!(matches!(
            p.collect_symmetric(),
            Err(QesError::NotSymmetric(_))
        ));
    }

    #[test]
    fn roots_expand_to_monic_polynomial() {
        let c = poly_from_roots(&[q(1), q(2)]);
        assert_eq!(c, vec![q(2), q(-3), q(1)]);
    }
}
