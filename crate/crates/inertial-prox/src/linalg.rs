//! Small dense factorizations used by the operator library.
//!
//! The instances this crate targets are dense with at most a few hundred
//! columns, so textbook LU and Cholesky factorizations (kept generic over
//! the scalar type) are sufficient and keep the crate free of system BLAS
//! dependencies.

use ndarray::ArrayView1;

use crate::rng::InstanceRng;
use crate::{Matrix, Scalar, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FactorError {
    Singular,
    NotPositiveDefinite,
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug)]
pub(crate) struct LuFactors<S> {
    lu: Matrix<S>,
    swaps: Vec<usize>,
}

impl<S: Scalar> LuFactors<S> {
    pub fn new(mut a: Matrix<S>) -> Result<Self, FactorError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU requires a square matrix");
        let mut swaps = vec![0usize; n];
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = a[[k, k]].abs();
            for i in k + 1..n {
                let mag = a[[i, k]].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = i;
                }
            }
            if !pivot_mag.is_finite() || pivot_mag == S::zero() {
                return Err(FactorError::Singular);
            }
            swaps[k] = pivot_row;
            if pivot_row != k {
                for j in 0..n {
                    let tmp = a[[k, j]];
                    a[[k, j]] = a[[pivot_row, j]];
                    a[[pivot_row, j]] = tmp;
                }
            }
            let pivot = a[[k, k]];
            for i in k + 1..n {
                let factor = a[[i, k]] / pivot;
                a[[i, k]] = factor;
                for j in k + 1..n {
                    let update = factor * a[[k, j]];
                    a[[i, j]] -= update;
                }
            }
        }
        Ok(Self { lu: a, swaps })
    }

    pub fn solve(&self, b: ArrayView1<'_, S>) -> Vector<S> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x = b.to_owned();
        for k in 0..n {
            x.swap(k, self.swaps[k]);
        }
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc / self.lu[[i, i]];
        }
        x
    }
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug)]
pub(crate) struct CholeskyFactors<S> {
    l: Matrix<S>,
}

impl<S: Scalar> CholeskyFactors<S> {
    pub fn new(a: &Matrix<S>) -> Result<Self, FactorError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky requires a square matrix");
        let mut l = Matrix::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !diag.is_finite() || diag <= S::zero() {
                return Err(FactorError::NotPositiveDefinite);
            }
            let root = diag.sqrt();
            l[[j, j]] = root;
            for i in j + 1..n {
                let mut acc = a[[i, j]];
                for k in 0..j {
                    acc -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = acc / root;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: ArrayView1<'_, S>) -> Vector<S> {
        let n = self.l.nrows();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x = b.to_owned();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.l[[i, j]] * x[j];
            }
            x[i] = acc / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.l[[j, i]] * x[j];
            }
            x[i] = acc / self.l[[i, i]];
        }
        x
    }
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// Runs at most 100 iterations, stopping early when the estimate's
/// relative change drops below 1e-12. The starting vector is drawn from
/// a fixed-seed stream rather than taken constant, so structured null
/// spaces (such as the constant vector for difference matrices) cannot
/// trap the iteration.
pub(crate) fn spectral_norm<S: Scalar>(a: &Matrix<S>) -> S {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return S::zero();
    }
    let mut rng = InstanceRng::new(0x7abe_31ff_0d5e_c4a1);
    let mut v: Vector<S> = rng.normal_vector(n);
    let scale = crate::norm(v.view());
    if scale > S::zero() {
        v /= scale;
    } else {
        v[0] = S::one();
    }
    let mut sigma_sq = S::zero();
    let tol = crate::real::<S>(1e-12);
    for _ in 0..100 {
        let w = a.t().dot(&a.dot(&v));
        let growth = crate::norm(w.view());
        if growth == S::zero() {
            return S::zero();
        }
        v = w / growth;
        let change = (growth - sigma_sq).abs();
        sigma_sq = growth;
        if change <= tol * sigma_sq.max(S::one()) {
            break;
        }
    }
    sigma_sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn lu_solves_a_known_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let lu = LuFactors::new(a).unwrap();
        let x = lu.solve(array![3.0, 5.0].view());
        assert_abs_diff_eq!(x[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.4, epsilon = 1e-14);
    }

    #[test]
    fn lu_pivots_through_a_zero_leading_entry() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let lu = LuFactors::new(a).unwrap();
        let x = lu.solve(array![2.0, 7.0].view());
        assert_abs_diff_eq!(x[0], 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn lu_rejects_a_singular_matrix() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert_eq!(LuFactors::new(a).unwrap_err(), FactorError::Singular);
    }

    #[test]
    fn lu_recovers_random_solutions() {
        let mut rng = InstanceRng::new(11);
        for _ in 0..20 {
            let a: Matrix<f64> = rng.normal_matrix(12, 12);
            let x_true: Vector<f64> = rng.normal_vector(12);
            let b = a.dot(&x_true);
            let x = LuFactors::new(a).unwrap().solve(b.view());
            for (got, want) in x.iter().zip(x_true.iter()) {
                assert_abs_diff_eq!(got, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cholesky_solves_an_spd_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let chol = CholeskyFactors::new(&a).unwrap();
        let x = chol.solve(array![8.0, 7.0].view());
        assert_abs_diff_eq!(a.dot(&x)[0], 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.dot(&x)[1], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_an_indefinite_matrix() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert_eq!(
            CholeskyFactors::new(&a).unwrap_err(),
            FactorError::NotPositiveDefinite
        );
    }

    #[test]
    fn spectral_norm_matches_a_diagonal_oracle() {
        let a = array![[3.0, 0.0], [0.0, 2.0]];
        assert_abs_diff_eq!(spectral_norm(&a), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_norm_ignores_structured_null_spaces() {
        let d = crate::bench::difference_matrix::<f64>(6).unwrap();
        let oracle = 2.0 * (std::f64::consts::PI * 5.0 / 12.0).sin();
        assert_abs_diff_eq!(spectral_norm(&d), oracle, epsilon = 1e-9);
    }

    #[test]
    fn spectral_norm_of_zero_matrix_is_zero() {
        let a: Matrix<f64> = Matrix::zeros((3, 4));
        assert_eq!(spectral_norm(&a), 0.0);
    }
}
