use nalgebra::{DMatrix, DVector};

use super::{l0_norm, soft_threshold, SolverResult};
use crate::error::{Error, Result};

/// State of one AMP iteration (or one unfolded network layer).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// Corrected residual `v_t`.
    pub v: DVector<f64>,
    /// `|v_t| / sqrt(P)`.
    pub sigma: f64,
    /// Pre-threshold estimate `r_t`.
    pub r: DVector<f64>,
    pub x_hat: DVector<f64>,
    /// Onsager coefficient that multiplied `v_{t-1}` in `v_t`.
    pub onsager: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrace {
    pub layers: Vec<LayerState>,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn last(&self) -> Option<&LayerState> {
        self.layers.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpOptions {
    pub iterations: usize,
    pub zeta: f64,
    /// Disable to drop the `b_t v_{t-1}` term (plain iterative thresholding).
    pub onsager: bool,
    /// Use this threshold instead of `zeta * sigma_t`.
    pub fixed_threshold: Option<f64>,
}

impl AmpOptions {
    pub fn new(iterations: usize, zeta: f64) -> Self {
        Self {
            iterations,
            zeta,
            onsager: true,
            fixed_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpOutput {
    pub result: SolverResult,
    pub trace: LayerTrace,
}

/// Untrained AMP: `B = Phi^T` and a common threshold scale `zeta` for every
/// iteration.
pub fn amp(y: &DVector<f64>, phi: &DMatrix<f64>, iterations: usize, zeta: f64) -> Result<AmpOutput> {
    amp_with(y, phi, &AmpOptions::new(iterations, zeta))
}

pub fn amp_with(y: &DVector<f64>, phi: &DMatrix<f64>, opts: &AmpOptions) -> Result<AmpOutput> {
    let (p, n) = phi.shape();
    if y.len() != p {
        return Err(Error::DimensionMismatch {
            context: "amp",
            expected: p,
            actual: y.len(),
        });
    }
    if opts.iterations < 1 {
        return Err(Error::config("AMP needs at least one iteration"));
    }
    if !(opts.zeta.is_finite() && opts.zeta >= 0.0) {
        return Err(Error::config(format!("zeta must be >= 0, got {}", opts.zeta)));
    }

    let mut x = DVector::zeros(n);
    let mut v_prev = DVector::zeros(p);
    let mut b = 0.0;
    let mut trace = LayerTrace::default();
    for t in 1..=opts.iterations {
        let onsager = if opts.onsager { b } else { 0.0 };
        let v = y - phi * &x + &v_prev * onsager;
        let sigma = v.norm() / (p as f64).sqrt();
        let r = &x + phi.tr_mul(&v);
        let x_next = match opts.fixed_threshold {
            Some(tau) => soft_threshold(&r, 1.0, tau),
            None => soft_threshold(&r, opts.zeta, sigma),
        };
        if !(sigma.is_finite() && r.iter().all(|v| v.is_finite()) && x_next.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { iteration: t });
        }
        b = l0_norm(&x_next) as f64 / p as f64;
        trace.layers.push(LayerState {
            v: v.clone(),
            sigma,
            r,
            x_hat: x_next.clone(),
            onsager,
        });
        x = x_next;
        v_prev = v;
    }
    Ok(AmpOutput {
        result: SolverResult::new(x, opts.iterations, phi, y),
        trace,
    })
}
