use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::SolverResult;
use crate::error::{Error, Result};

/// `1e-6 * trace(Phi^T Phi) / N`.
pub fn default_ridge(phi: &DMatrix<f64>) -> f64 {
    1e-6 * phi.norm_squared() / phi.ncols() as f64
}

/// Ridge-regularized least squares, `argmin |y - Phi x|^2 + ridge |x|^2`.
///
/// Solves whichever of the P x P or N x N normal systems is smaller.
pub fn ls_estimate(y: &DVector<f64>, phi: &DMatrix<f64>, ridge: f64) -> Result<SolverResult> {
    if y.len() != phi.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ls_estimate",
            expected: phi.nrows(),
            actual: y.len(),
        });
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::config(format!("ridge must be >= 0, got {ridge}")));
    }
    let (p, n) = phi.shape();
    let estimate = if p < n {
        let gram = phi * phi.transpose();
        let z = solve_spd(gram, ridge, y)?;
        phi.tr_mul(&z)
    } else {
        let gram = phi.tr_mul(phi);
        solve_spd(gram, ridge, &phi.tr_mul(y))?
    };
    Ok(SolverResult::new(estimate, 1, phi, y))
}

fn solve_spd(mut gram: DMatrix<f64>, ridge: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = gram.nrows();
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    let max_diag = gram.diagonal().max();
    match Cholesky::new(gram.clone()) {
        Some(chol) => {
            if ridge == 0.0 && is_rank_deficient(&chol, max_diag) {
                return Err(Error::SingularSystem);
            }
            Ok(chol.solve(rhs))
        }
        None if ridge == 0.0 => Err(Error::SingularSystem),
        // Tiny ridges on very ill-conditioned Gram matrices can lose definiteness
        // to rounding; LU still solves the regularized system.
        None => gram.lu().solve(rhs).ok_or(Error::SingularSystem),
    }
}

fn is_rank_deficient(chol: &Cholesky<f64, Dyn>, max_diag: f64) -> bool {
    let l = chol.l_dirty();
    let n = l.nrows();
    let tol = n as f64 * f64::EPSILON * max_diag;
    (0..n).any(|i| l[(i, i)] * l[(i, i)] <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sign_matrix(rng: &mut ChaCha8Rng, p: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(p, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
    }

    #[test]
    fn orthogonal_square_is_inverted_by_transpose() {
        let h = DMatrix::from_row_slice(
            4,
            4,
            &[1., 1., 1., 1., 1., -1., 1., -1., 1., 1., -1., -1., 1., -1., -1., 1.],
        ) / 2.0;
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        let got = ls_estimate(&y, &h, 0.0).unwrap();
        assert!((got.estimate - h.transpose() * &y).norm() < 1e-14);
    }

    #[test]
    fn zero_measurement_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_sign_matrix(&mut rng, 6, 10);
        for ridge in [1e-3, 1.0] {
            let got = ls_estimate(&DVector::zeros(6), &phi, ridge).unwrap();
            assert!(got.estimate.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn rank_one_without_ridge_is_singular() {
        let phi = DMatrix::from_element(5, 8, 1.0);
        let y = DVector::from_element(5, 1.0);
        assert!(matches!(ls_estimate(&y, &phi, 0.0), Err(Error::SingularSystem)));
        assert!(ls_estimate(&y, &phi, 1e-3).is_ok());
    }

    #[test]
    fn satisfies_regularized_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (p, n) in [(12, 30), (30, 12), (20, 20)] {
            let phi = random_sign_matrix(&mut rng, p, n);
            let y = DVector::from_fn(p, |_, _| rng.random::<f64>() - 0.5);
            let ridge = 0.3;
            let x = ls_estimate(&y, &phi, ridge).unwrap().estimate;
            let lhs = phi.tr_mul(&phi) * &x + &x * ridge;
            let rhs = phi.tr_mul(&y);
            assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
        }
    }
}
