//! Baseline estimators: ridge least squares, OMP and untrained AMP.

mod amp;
mod ls;
mod omp;

use nalgebra::{DMatrix, DVector};

pub use amp::{amp, amp_with, AmpOptions, AmpOutput, LayerState, LayerTrace};
pub use ls::{default_ridge, ls_estimate};
pub use omp::{omp, omp_with_path, OmpOutput};

/// Support-counting cutoff for the Onsager coefficient.
pub const L0_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub estimate: DVector<f64>,
    pub iterations_used: usize,
    pub residual_norm: f64,
}

impl SolverResult {
    pub(crate) fn new(estimate: DVector<f64>, iterations_used: usize, phi: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let residual_norm = (y - phi * &estimate).norm();
        Self {
            estimate,
            iterations_used,
            residual_norm,
        }
    }
}

/// `eta(r; zeta, sigma)_i = sgn(r_i) * max(|r_i| - zeta * sigma, 0)`.
pub fn soft_threshold(r: &DVector<f64>, zeta: f64, sigma: f64) -> DVector<f64> {
    let tau = zeta * sigma;
    r.map(|v| shrink(v, tau))
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    let m = v.abs() - tau;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Number of entries with magnitude above [`L0_EPS`].
pub fn l0_norm(x: &DVector<f64>) -> usize {
    x.iter().filter(|v| v.abs() > L0_EPS).count()
}
