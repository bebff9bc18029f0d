//! Dense least-squares solvers shared by training and prediction.
//!
//! The solve route depends on shape and rank: square systems go through LU
//! with partial pivoting, tall systems through Householder QR, and anything
//! rank-deficient falls back to an SVD minimum-norm solution. Callers get a
//! flag back instead of an error when the fallback fires.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which a pivot or singular value counts as zero.
const RANK_TOL: f64 = 1e-12;

/// Result of a least-squares solve: the minimizer of the Frobenius residual
/// and whether the minimum-norm fallback had to be used.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: DMatrix<f64>,
    pub rank_deficient: bool,
}

fn svd_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sv_max == 0.0 {
        return Err(Error::DegenerateSystem("coefficient matrix is zero".into()));
    }
    svd.solve(b, sv_max * RANK_TOL)
        .map_err(|e| Error::DegenerateSystem(e.to_string()))
}

/// Minimizes `‖A X - B‖_F` over all `X`.
///
/// `A` is `m x n`, `B` is `m x c`; requires `m >= n`.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LeastSquares> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() < a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "underdetermined system: {} rows < {} columns",
            a.nrows(),
            a.ncols()
        )));
    }

    if a.nrows() == a.ncols() {
        if let Some(solution) = a.clone().lu().solve(b) {
            if solution.iter().all(|v| v.is_finite()) {
                return Ok(LeastSquares {
                    solution,
                    rank_deficient: false,
                });
            }
        }
        return Ok(LeastSquares {
            solution: svd_min_norm(a, b)?,
            rank_deficient: true,
        });
    }

    let n = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let deficient = diag_max == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= diag_max * RANK_TOL);
    if deficient {
        return Ok(LeastSquares {
            solution: svd_min_norm(a, b)?,
            rank_deficient: true,
        });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let solution = r
        .solve_upper_triangular(&qtb.rows(0, n).clone_owned())
        .ok_or_else(|| Error::DegenerateSystem("triangular solve failed".into()))?;
    Ok(LeastSquares {
        solution,
        rank_deficient: false,
    })
}

/// Ridge-regularized variant: minimizes `‖A X - B‖_F² + λ‖X‖_F²` through the
/// normal equations, which are well posed for `λ > 0`.
pub fn solve_ridge(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<LeastSquares> {
    if lambda == 0.0 {
        return solve_least_squares(a, b);
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge weight {lambda} must be >= 0"
        )));
    }
    let mut gram = a.transpose() * a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = a.transpose() * b;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::DegenerateSystem("ridge normal equations not positive definite".into())
    })?;
    Ok(LeastSquares {
        solution: chol.solve(&rhs),
        rank_deficient: false,
    })
}

/// A factored tall system `A θ = b` reused across many right-hand sides.
#[derive(Debug)]
pub struct RepeatedSolver {
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    eps: f64,
    pub rank_deficient: bool,
}

impl RepeatedSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let cols = a.ncols();
        let svd = a.clone().svd(true, true);
        let sv_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if sv_max == 0.0 {
            return Err(Error::DegenerateSystem("coefficient matrix is zero".into()));
        }
        let eps = sv_max * RANK_TOL;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        Ok(Self {
            svd,
            eps,
            rank_deficient: rank < cols,
        })
    }

    /// Minimum-norm least-squares solution for one right-hand side.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let sol = self
            .svd
            .solve(b, self.eps)
            .map_err(|e| Error::DegenerateSystem(e.to_string()))?;
        Ok(DVector::from_column_slice(sol.as_slice()))
    }
}

/// Largest and smallest positive singular values of `a`.
///
/// The smallest is taken over singular values above the rank cutoff, so the
/// pair describes the action of `a` restricted to its row space.
pub fn spectral_extremes(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let svd = a.clone().svd(false, false);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sv_max == 0.0 {
        return Err(Error::DegenerateSystem(
            "zero matrix has no spectral extremes".into(),
        ));
    }
    let cutoff = sv_max * RANK_TOL;
    let sv_min = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    Ok((sv_max, sv_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_solve_matches_hand_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let ls = solve_least_squares(&a, &b).unwrap();
        assert!(!ls.rank_deficient);
        assert_eq!(
            ls.solution,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])
        );
    }

    #[test]
    fn tall_solve_recovers_planted_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x;
        let ls = solve_least_squares(&a, &b).unwrap();
        assert!(!ls.rank_deficient);
        for (got, want) in ls.solution.iter().zip(x.iter()) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_falls_back_to_minimum_norm() {
        // Two identical columns: infinitely many minimizers.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let ls = solve_least_squares(&a, &b).unwrap();
        assert!(ls.rank_deficient);
        // Minimum-norm solution splits the weight evenly.
        assert!((ls.solution[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((ls.solution[(1, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_solver_agrees_with_one_shot() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let solver = RepeatedSolver::new(&a).unwrap();
        for _ in 0..5 {
            let b = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let one = solve_least_squares(&a, &DMatrix::from_column_slice(12, 1, b.as_slice()))
                .unwrap()
                .solution;
            let rep = solver.solve(&b).unwrap();
            for i in 0..3 {
                assert!((one[(i, 0)] - rep[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ridge_shrinks_toward_zero() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(3, 1, &[3.0, 3.0, 3.0]);
        let plain = solve_ridge(&a, &b, 0.0).unwrap().solution[(0, 0)];
        let shrunk = solve_ridge(&a, &b, 3.0).unwrap().solution[(0, 0)];
        assert!((plain - 3.0).abs() < 1e-12);
        assert!((shrunk - 1.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_extremes_of_scalar() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let (hi, lo) = spectral_extremes(&a).unwrap();
        assert!((hi - 2.0).abs() < 1e-14);
        assert!((lo - 2.0).abs() < 1e-14);
    }
}
