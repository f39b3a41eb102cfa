use nalgebra::{DMatrix, DVector};

use super::SolverResult;
use crate::error::{Error, Result};

/// Relative size below which a new atom is treated as already in the span.
const DEPENDENT_ATOM: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct OmpOutput {
    pub result: SolverResult,
    /// Atoms in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Orthogonal matching pursuit with at most `k_max` atoms.
pub fn omp(y: &DVector<f64>, phi: &DMatrix<f64>, k_max: usize, tol: f64) -> Result<SolverResult> {
    omp_with_path(y, phi, k_max, tol).map(|o| o.result)
}

/// OMP that also reports the selected atoms and the residual trajectory.
///
/// Atoms are chosen by the largest `|<phi_j, r>| / |phi_j|` (ties go to the
/// smallest index). The least-squares refit on the support is kept in
/// factored form `Phi_S = Q R` via Gram-Schmidt with one reorthogonalization
/// pass.
pub fn omp_with_path(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    k_max: usize,
    tol: f64,
) -> Result<OmpOutput> {
    let (p, n) = phi.shape();
    if y.len() != p {
        return Err(Error::DimensionMismatch {
            context: "omp",
            expected: p,
            actual: y.len(),
        });
    }
    if k_max < 1 || k_max > p.min(n) {
        return Err(Error::config(format!(
            "k_max must lie in 1..={}, got {k_max}",
            p.min(n)
        )));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::config(format!("tol must be >= 0, got {tol}")));
    }
    let norms: Vec<f64> = phi.column_iter().map(|c| c.norm()).collect();
    if let Some(k) = norms.iter().position(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::DegenerateColumn(k));
    }

    let mut support: Vec<usize> = Vec::with_capacity(k_max);
    let mut in_support = vec![false; n];
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k_max);
    // Column-major upper triangle of R: r_cols[j][i] = R[i, j].
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut qty: Vec<f64> = Vec::with_capacity(k_max);
    let mut residual = y.clone();
    let mut history = vec![residual.norm()];

    while support.len() < k_max && *history.last().unwrap() > tol {
        let corr = phi.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !in_support[*j]) {
            let score = corr[j].abs() / norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };

        let atom = phi.column(j).into_owned();
        let mut q = atom.clone();
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = b.dot(&q);
                coeffs[i] += c;
                q.axpy(-c, b, 1.0);
            }
        }
        let q_norm = q.norm();
        if q_norm <= DEPENDENT_ATOM * norms[j] {
            break;
        }
        q /= q_norm;
        coeffs.push(q_norm);

        let proj = q.dot(&residual);
        residual.axpy(-proj, &q, 1.0);
        qty.push(q.dot(y));
        basis.push(q);
        r_cols.push(coeffs);
        support.push(j);
        in_support[j] = true;
        history.push(residual.norm());
    }

    let s = support.len();
    let mut coef = vec![0.0; s];
    for i in (0..s).rev() {
        let tail: f64 = ((i + 1)..s).map(|c| r_cols[c][i] * coef[c]).sum();
        coef[i] = (qty[i] - tail) / r_cols[i][i];
    }
    let mut estimate = DVector::zeros(n);
    for (&k, c) in support.iter().zip(coef) {
        estimate[k] = c;
    }
    Ok(OmpOutput {
        result: SolverResult::new(estimate, s, phi, y),
        support,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_sparse_orthogonal_is_exact() {
        let phi = DMatrix::<f64>::identity(6, 6) * 2.0;
        let mut x = DVector::zeros(6);
        x[4] = -1.5;
        let got = omp(&(&phi * &x), &phi, 1, 0.0).unwrap();
        assert_eq!(got.estimate, x);
    }

    #[test]
    fn zero_measurement_takes_no_iterations() {
        let phi = DMatrix::from_fn(5, 9, |i, j| ((i * 9 + j) as f64).sin());
        let got = omp(&DVector::zeros(5), &phi, 3, 0.0).unwrap();
        assert_eq!(got.iterations_used, 0);
        assert!(got.estimate.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ties_break_toward_smallest_index() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        let out = omp_with_path(&y, &phi, 1, 0.0).unwrap();
        assert_eq!(out.support, vec![0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let phi = DMatrix::from_element(3, 4, 1.0);
        let y = DVector::from_element(3, 1.0);
        assert!(matches!(omp(&y, &phi, 0, 0.0), Err(Error::Config(_))));
        assert!(matches!(omp(&y, &phi, 4, 0.0), Err(Error::Config(_))));
        let mut bad = phi.clone();
        bad.column_mut(2).fill(0.0);
        assert!(matches!(omp(&y, &bad, 1, 0.0), Err(Error::DegenerateColumn(2))));
    }

    fn gaussian(rng: &mut ChaCha8Rng, p: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
    }

    proptest! {
        #[test]
        fn residual_is_monotone_and_support_is_exact(seed in 0u64..500, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = gaussian(&mut rng, 16, 32);
            let y = DVector::from_fn(16, |_, _| rng.random::<f64>() - 0.5);
            let out = omp_with_path(&y, &phi, k, 0.0).unwrap();
            prop_assert!(out.support.len() <= out.result.iterations_used);
            prop_assert!(out.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            for (j, v) in out.result.estimate.iter().enumerate() {
                prop_assert_eq!(*v != 0.0, out.support.contains(&j));
            }
        }
    }
}
