//! Thin wrappers over faer's sparse and dense factorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, Side};
use num_complex::Complex64;

use crate::fem::SparseMatrix;
use crate::{Error, Result};

fn to_faer(a: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let triplets: Vec<Triplet<usize, usize, f64>> =
        a.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &triplets)
        .map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
        }
        let m = to_faer(a)?;
        let llt = m.sp_cholesky(Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SpdSolver { llt, n: a.nrows() })
    }

    /// Factor reusing a symbolic analysis computed for the same pattern.
    pub fn with_symbolic(a: &SparseMatrix, symbolic: &SymbolicLlt<usize>) -> Result<Self> {
        let m = to_faer(a)?;
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), m.as_ref(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SpdSolver { llt, n: a.nrows() })
    }

    /// Symbolic analysis of the sparsity pattern of `a`.
    pub fn analyze(a: &SparseMatrix) -> Result<SymbolicLlt<usize>> {
        let m = to_faer(a)?;
        SymbolicLlt::try_new(m.symbolic(), Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve for every column of `b`.
    pub fn solve_many(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    pub fn solve_complex(&self, b: &[Complex64]) -> Vec<Complex64> {
        let rhs = Mat::<f64>::from_fn(self.n, 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| Complex64::new(x[(i, 0)], x[(i, 1)])).collect()
    }
}

/// Sparse LU factorization of a complex matrix.
#[derive(Debug, Clone)]
pub struct ComplexSolver {
    lu: Lu<usize, c64>,
    n: usize,
}

impl ComplexSolver {
    /// Factor `ca * a + cb * b` for real sparse `a`, `b` of equal size.
    pub fn combination(a: &SparseMatrix, ca: Complex64, b: &SparseMatrix, cb: Complex64) -> Result<Self> {
        let n = a.nrows();
        let mut triplets: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(a.nnz() + b.nnz());
        for (i, j, v) in a.triplets() {
            triplets.push(Triplet::new(i, j, ca * v));
        }
        for (i, j, v) in b.triplets() {
            triplets.push(Triplet::new(i, j, cb * v));
        }
        let m = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(ComplexSolver { lu, n })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let rhs = Mat::<c64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Solve a small dense symmetric positive definite system in place.
/// Returns `None` if the matrix is not numerically positive definite.
pub fn dense_spd_solve(a: &Mat<f64>, b: &Mat<f64>) -> Option<Mat<f64>> {
    let llt = a.llt(Side::Lower).ok()?;
    Some(llt.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn cholesky_solves() {
        let a = laplace_1d(20);
        let s = SpdSolver::new(&a).unwrap();
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let x = s.solve(&b);
        let r = a.matvec(&x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
        let sym = SpdSolver::analyze(&a).unwrap();
        let s2 = SpdSolver::with_symbolic(&a.scaled(2.0), &sym).unwrap();
        let x2 = s2.solve(&b);
        assert!(x.iter().zip(&x2).all(|(p, q)| (p - 2.0 * q).abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = laplace_1d(5).scaled(-1.0);
        assert!(SpdSolver::new(&a).is_err());
    }

    #[test]
    fn complex_lu_solves() {
        let a = laplace_1d(10);
        let m = SparseMatrix::identity(10);
        let z = Complex64::new(0.0, 0.3);
        let s = ComplexSolver::combination(&m, Complex64::new(1.0, 0.0), &a, z).unwrap();
        let b: Vec<Complex64> = (0..10).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = s.solve(&b);
        let ax = a.matvec_complex(&x);
        for i in 0..10 {
            assert!((x[i] + z * ax[i] - b[i]).norm() < 1e-12);
        }
    }
}
