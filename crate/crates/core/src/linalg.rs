//! Dense complex linear algebra: guarded least squares, eigenvalues with
//! clustering, and a division-free characteristic polynomial.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QesError, Result};
use crate::ring::Ring;

type C64 = Complex64;

/// Default condition-number cap for collocation systems.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative distance under which eigenvalues are reported as one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Solution, one column per right-hand side.
    pub solution: DMatrix<C64>,
    /// `|A x - b| / |b|` per right-hand side.
    pub relative_residuals: Vec<f64>,
    /// Condition number of the column-equilibrated system matrix.
    pub condition: f64,
    pub singular_values: Vec<f64>,
}

impl LeastSquares {
    pub fn max_residual(&self) -> f64 {
        self.relative_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Solves `min |A X - B|` column by column through an SVD of the
/// column-equilibrated `A`.
pub fn least_squares(
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    max_condition: f64,
) -> Result<LeastSquares> {
    let (rows, cols) = a.shape();
    if rows < cols || b.nrows() != rows {
        return Err(QesError::InvalidParameter(format!(
            "least squares needs rows >= cols and matching right-hand side ({rows}x{cols}, rhs {} rows)",
            b.nrows()
        )));
    }
    let scales: Vec<f64> = (0..cols)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= max_condition) {
        return Err(QesError::IllConditioned { cond: condition });
    }
    let y = svd
        .solve(b, 0.0)
        .map_err(|e| QesError::InvalidParameter(e.to_string()))?;
    let mut solution = y;
    for (j, s) in scales.iter().enumerate() {
        solution.row_mut(j).scale_mut(*s);
    }
    let fitted = a * &solution;
    let relative_residuals = (0..b.ncols())
        .map(|k| {
            let r = (fitted.column(k) - b.column(k)).norm();
            let n = b.column(k).norm();
            if n > 0.0 {
                r / n
            } else {
                r
            }
        })
        .collect();
    Ok(LeastSquares {
        solution,
        relative_residuals,
        condition,
        singular_values: sv,
    })
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues with multiplicity, sorted by real then imaginary part.
    pub eigenvalues: Vec<C64>,
    /// Cluster representatives with their sizes.
    pub clusters: Vec<(C64, usize)>,
    /// `|A Q - Q T|_F / |A|_F` of the Schur factorization.
    pub backward_error: f64,
}

pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Groups sorted eigenvalues whose relative distance is below `tol`.
pub fn cluster(values: &[C64], tol: f64) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize, C64)> = Vec::new();
    for &v in values {
        let scale = v.norm().max(1.0);
        match out
            .iter_mut()
            .find(|(rep, _, _)| (*rep - v).norm() <= tol * scale.max(rep.norm()))
        {
            Some(entry) => {
                entry.1 += 1;
                entry.2 += v;
            }
            None => out.push((v, 1, v)),
        }
    }
    out.into_iter()
        .map(|(_, n, sum)| (sum / n as f64, n))
        .collect()
}

/// Eigenvalues of a dense complex matrix through its Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(QesError::InvalidParameter("matrix is not square".into()));
    }
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            clusters: Vec::new(),
            backward_error: 0.0,
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 10_000).ok_or_else(|| {
        QesError::NoConvergence(format!("Schur iteration cap reached for {n}x{n} matrix"))
    })?;
    let (q, t) = schur.unpack();
    let mut eig: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let norm = m.norm();
    let backward_error = if norm > 0.0 {
        (m * &q - &q * &t).norm() / norm
    } else {
        0.0
    };
    sort_complex(&mut eig);
    let clusters = cluster(&eig, CLUSTER_TOL);
    Ok(Spectrum {
        eigenvalues: eig,
        clusters,
        backward_error,
    })
}

/// Coefficients (constant term first) of `det(x I - A)`, computed without
/// division by the Berkowitz recursion.
pub fn characteristic_polynomial<R: Ring>(a: &[Vec<R>]) -> Vec<R> {
    let n = a.len();
    if n == 0 {
        return vec![R::one()];
    }
    // highest degree first while building
    let mut p = vec![R::one(), -a[0][0].clone()];
    for r in 1..n {
        let col: Vec<R> = (0..r).map(|i| a[i][r].clone()).collect();
        let row: Vec<R> = (0..r).map(|j| a[r][j].clone()).collect();
        let mut t = vec![R::one(), -a[r][r].clone()];
        let mut v = col;
        for _ in 0..r {
            let dot = row
                .iter()
                .zip(&v)
                .fold(R::zero(), |acc, (x, y)| acc + x.clone() * y.clone());
            t.push(-dot);
            v = (0..r)
                .map(|i| (0..r).fold(R::zero(), |acc, j| acc + a[i][j].clone() * v[j].clone()))
                .collect();
        }
        let mut q = vec![R::zero(); r + 2];
        for (i, qi) in q.iter_mut().enumerate() {
            for (j, pj) in p.iter().enumerate() {
                if j <= i {
                    *qi = qi.clone() + t[i - j].clone() * pj.clone();
                }
            }
        }
        p = q;
    }
    p.reverse();
    p
}

fn horner(c: &[C64], x: C64) -> (C64, C64) {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for &ci in c.iter().rev() {
        d = d * x + v;
        v = v * x + ci;
    }
    (v, d)
}

/// Roots of a complex polynomial (constant term first) by Aberth iteration.
pub fn polynomial_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().map(|x| x.norm() == 0.0).unwrap_or(false) {
        c.pop();
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let monic: Vec<C64> = c.iter().map(|x| x / lead).collect();
    // Fujiwara radius bound
    let bound = monic[..deg]
        .iter()
        .enumerate()
        .map(|(k, x)| x.norm().powf(1.0 / (deg - k) as f64))
        .fold(0.0, f64::max)
        * 2.0;
    let bound = if bound > 0.0 { bound } else { 1.0 };
    let mut z: Vec<C64> = (0..deg)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / deg as f64 + 0.4;
            C64::from_polar(0.5 * bound, angle)
        })
        .collect();
    let abs: Vec<f64> = monic.iter().map(|x| x.norm()).collect();
    let mut done = vec![false; deg];
    for _ in 0..2000 {
        for i in 0..deg {
            if done[i] {
                continue;
            }
            let (v, d) = horner(&monic, z[i]);
            // stop once the residual is at the rounding level of the evaluation
            let r = z[i].norm();
            let noise = abs.iter().rev().fold(0.0, |acc, a| acc * r + a) * 4.0 * f64::EPSILON;
            if v.norm() <= noise {
                done[i] = true;
                continue;
            }
            let ratio = v / d;
            let repulsion: C64 = (0..deg)
                .filter(|&j| j != i)
                .map(|j| C64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() <= f64::EPSILON * z[i].norm() {
                done[i] = true;
            }
        }
        if done.iter().all(|&x| x) {
            sort_complex(&mut z);
            return Ok(z);
        }
    }
    Err(QesError::NoConvergence(format!(
        "Aberth iteration for degree {deg} polynomial"
    )))
}
