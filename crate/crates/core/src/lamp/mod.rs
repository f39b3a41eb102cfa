//! Deep-unfolded AMP with per-layer learnable `(B_t, zeta_t)`.
//!
//! Layer `t` computes
//!
//! ```text
//! v_t = y - Phi x_{t-1} + b_t v_{t-1}
//! sigma_t = |v_t| / sqrt(P)
//! r_t = x_{t-1} + B_t v_t
//! x_t = eta(r_t; zeta_t, sigma_t)
//! ```
//!
//! with `b_t = |x_{t-1}|_0 / P`. Freshly added layers start at `B = Phi^T`,
//! `zeta = 1`, which makes an untrained network identical to plain AMP.

mod adam;
mod train;

use nalgebra::{DMatrix, DVector};

use crate::channel::SparseProxy;
use crate::error::{Error, Result};
use crate::sensing::{MeasurementProvenance, ObservationMatrix};
use crate::solvers::{shrink, LayerState, LayerTrace, L0_EPS};

pub use adam::{adam_step, AdamState};
pub use train::{
    train_layerwise, EpochRecord, LayerSummary, StopCriterion, StopReason, TrainConfig,
    TrainOutcome,
};

/// Smallest threshold scale kept after an update.
pub const ZETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LampLayer {
    /// N x P matrix applied to the corrected residual.
    pub b: DMatrix<f64>,
    pub zeta: f64,
}

impl LampLayer {
    /// `B = Phi^T`, `zeta = 1`.
    pub fn fresh(phi: &DMatrix<f64>) -> Self {
        Self {
            b: phi.transpose(),
            zeta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LampParams {
    layers: Vec<LampLayer>,
    provenance: MeasurementProvenance,
}

impl LampParams {
    pub fn new(layers: Vec<LampLayer>, provenance: MeasurementProvenance) -> Result<Self> {
        let (n, p) = (provenance.distances.len, provenance.pilots.pilots);
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (t, l) in layers.iter().enumerate() {
            if l.b.shape() != (n, p) {
                return Err(Error::config(format!(
                    "layer {}: B is {:?}, expected ({n}, {p})",
                    t + 1,
                    l.b.shape()
                )));
            }
            if !l.b.iter().all(|v| v.is_finite()) {
                return Err(Error::config(format!("layer {}: B has non-finite entries", t + 1)));
            }
            if !(l.zeta.is_finite() && l.zeta > 0.0) {
                return Err(Error::config(format!("layer {}: zeta must be > 0, got {}", t + 1, l.zeta)));
            }
        }
        Ok(Self { layers, provenance })
    }

    /// `depth` copies of the AMP initialization.
    pub fn untrained(phi: &ObservationMatrix, depth: usize) -> Result<Self> {
        let layer = LampLayer::fresh(phi.matrix());
        Self::new(vec![layer; depth], *phi.provenance())
    }

    pub fn layers(&self) -> &[LampLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn provenance(&self) -> &MeasurementProvenance {
        &self.provenance
    }
}

/// Runs every layer on one measurement, returning `x_T` and the per-layer states.
pub fn forward(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    params: &LampParams,
) -> Result<(DVector<f64>, LayerTrace)> {
    let (p, n) = phi.shape();
    if y.len() != p {
        return Err(Error::DimensionMismatch {
            context: "lamp forward",
            expected: p,
            actual: y.len(),
        });
    }
    let mut x = DVector::zeros(n);
    let mut v = DVector::zeros(p);
    let mut nnz = 0usize;
    let mut trace = LayerTrace::default();
    for (idx, layer) in params.layers.iter().enumerate() {
        if layer.b.shape() != (n, p) {
            return Err(Error::DimensionMismatch {
                context: "lamp layer",
                expected: n * p,
                actual: layer.b.len(),
            });
        }
        let onsager = nnz as f64 / p as f64;
        let mut v_next = y - phi * &x;
        v_next.axpy(onsager, &v, 1.0);
        let sigma = v_next.norm() / (p as f64).sqrt();
        let r = &x + &layer.b * &v_next;
        let tau = layer.zeta * sigma;
        let x_next = r.map(|ri| shrink(ri, tau));
        if !(sigma.is_finite() && r.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { iteration: idx + 1 });
        }
        nnz = x_next.iter().filter(|v| v.abs() > L0_EPS).count();
        trace.layers.push(LayerState {
            v: v_next.clone(),
            sigma,
            r,
            x_hat: x_next.clone(),
            onsager,
        });
        x = x_next;
        v = v_next;
    }
    Ok((x, trace))
}

/// Mean squared error `(1/D) sum_d |x_T(y_d) - x_d|^2`.
pub fn loss<'a, I>(params: &LampParams, phi: &DMatrix<f64>, samples: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>)>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (y, x) in samples {
        let (x_hat, _) = forward(y, phi, params)?;
        total += (x_hat - x).norm_squared();
        count += 1;
    }
    if count == 0 {
        return Err(Error::config("loss over an empty dataset"));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub b: DMatrix<f64>,
    pub zeta: f64,
}

/// Gradient of `|x_T - x_true|^2` with respect to the last layer's `(B_T, zeta_T)`.
///
/// `sigma_T`, `b_T` and everything computed by earlier layers are held
/// constant. The soft-threshold derivative at the kink is taken as zero.
pub fn layer_gradients(
    trace: &LayerTrace,
    x_true: &DVector<f64>,
    params: &LampParams,
    layer: usize,
) -> Result<LayerGradient> {
    let depth = params.depth();
    if layer != depth || trace.len() != depth {
        return Err(Error::config(format!(
            "gradients are only available for the newest layer ({depth}), asked for {layer}"
        )));
    }
    let state = &trace.layers[depth - 1];
    let tau = params.layers[depth - 1].zeta * state.sigma;
    let (p, n) = (state.v.len(), state.r.len());
    let mut masked = DVector::zeros(n);
    let mut zeta_grad = 0.0;
    for i in 0..n {
        if state.r[i].abs() > tau {
            let g = 2.0 * (state.x_hat[i] - x_true[i]);
            masked[i] = g;
            zeta_grad -= state.sigma * g * state.r[i].signum();
        }
    }
    let mut b = DMatrix::zeros(n, p);
    b.ger(1.0, &masked, &state.v, 0.0);
    Ok(LayerGradient { b, zeta: zeta_grad })
}

/// Single forward pass of a trained network.
pub fn infer(
    y: &DVector<f64>,
    phi: &ObservationMatrix,
    params: &LampParams,
) -> Result<SparseProxy> {
    params
        .provenance
        .ensure_matches(phi.provenance(), "network vs observation matrix")?;
    forward(y, phi.matrix(), params).map(|(x, _)| SparseProxy(x))
}
