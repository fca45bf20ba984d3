//! Dense restriction of an operator to a finite monomial-symmetric basis.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ring::Ring;
use crate::sympoly::{Partition, SymPoly};

/// Column `j` of `entries` holds the image of `basis[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix<R> {
    pub basis: Vec<Partition>,
    /// Row-major entries.
    pub entries: Vec<Vec<R>>,
    /// Largest coefficient mass of any image outside the basis span; zero
    /// exactly when every image closes (exact rings) or the fit residual
    /// for collocated matrices.
    pub closure_residual: f64,
}

impl<R: Ring> OperatorMatrix<R> {
    /// Assembles the matrix from the images of the basis elements.
    pub fn from_images(basis: Vec<Partition>, images: &[SymPoly<R>]) -> Self {
        let dim = basis.len();
        let mut entries = vec![vec![R::zero(); dim]; dim];
        let mut residual = 0.0_f64;
        for (col, img) in images.iter().enumerate() {
            for (label, c) in &img.terms {
                match basis.iter().position(|b| b == label) {
                    Some(row) => entries[row][col] = c.clone(),
                    None => residual = residual.max(c.magnitude()),
                }
            }
        }
        OperatorMatrix {
            basis,
            entries,
            closure_residual: residual,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn map<S, F: Fn(&R) -> S>(&self, f: F) -> OperatorMatrix<S> {
        OperatorMatrix {
            basis: self.basis.clone(),
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(&f).collect())
                .collect(),
            closure_residual: self.closure_residual,
        }
    }
}

impl OperatorMatrix<Complex64> {
    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j])
    }

    pub fn from_dmatrix(
        basis: Vec<Partition>,
        m: &DMatrix<Complex64>,
        closure_residual: f64,
    ) -> Self {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        OperatorMatrix {
            basis,
            entries,
            closure_residual,
        }
    }
}

/// `|[A, B]|_F / (|A|_F |B|_F)`.
pub fn relative_commutator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let c = a * b - b * a;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        c.norm()
    } else {
        c.norm() / denom
    }
}
