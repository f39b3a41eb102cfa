//! Layer-wise training: grow the network one layer at a time, fit only the
//! newest layer with minibatch Adam, and stop once a new layer stops helping.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::{LampLayer, LampParams, ZETA_FLOOR};
use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::sensing::ObservationMatrix;
use crate::solvers::L0_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Compare the training-set loss of consecutive layers.
    TrainLoss,
    /// Compare the held-out loss instead.
    TestLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Training-set size D.
    pub train_size: usize,
    /// Held-out set size S.
    pub test_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs_per_layer: usize,
    pub batch_size: usize,
    pub max_layers: usize,
    pub seed: u64,
    pub stop_on: StopCriterion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_size: 1000,
            test_size: 100,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs_per_layer: 200,
            batch_size: 50,
            max_layers: 8,
            seed: 0,
            stop_on: StopCriterion::TrainLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.train_size < 1 || self.test_size < 1 {
            return fail("train_size and test_size must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return fail(format!("eps must be > 0, got {}", self.eps));
        }
        if self.epochs_per_layer < 1 || self.batch_size < 1 || self.max_layers < 1 {
            return fail("epochs_per_layer, batch_size and max_layers must be >= 1".into());
        }
        Ok(())
    }
}

/// One row of the training log. Epoch 0 is the freshly initialized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub layer: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    /// `NaN` when some held-out truth is all-zero.
    pub test_nmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub layer: usize,
    pub initial_loss: f64,
    pub trained_loss: f64,
    pub test_loss: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The probe layer made the stopping metric worse and was discarded.
    NoImprovement,
    /// Training loss reached zero; nothing left to fit.
    ZeroLoss,
    MaxLayers,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LampParams,
    /// End-of-layer training loss `L_t` of every retained layer.
    pub loss_history: Vec<f64>,
    /// Every layer that was trained, including a discarded probe.
    pub layers: Vec<LayerSummary>,
    pub log: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl TrainOutcome {
    pub fn depth(&self) -> usize {
        self.params.depth()
    }

    /// Loss of the layer that triggered the stop, if one was discarded.
    pub fn probe_loss(&self) -> Option<f64> {
        self.layers.iter().find(|l| !l.kept).map(|l| l.trained_loss)
    }
}

/// Per-sample network state after the frozen layers, so that training the
/// newest layer never re-runs the earlier ones.
struct Prefix {
    y: DMatrix<f64>,
    x_true: DMatrix<f64>,
    x: DMatrix<f64>,
    v: DMatrix<f64>,
    onsager: Vec<f64>,
}

/// Output of the newest layer on a block of samples.
struct LayerEval {
    v: DMatrix<f64>,
    sigma: Vec<f64>,
    r: DMatrix<f64>,
    x_hat: DMatrix<f64>,
}

impl Prefix {
    fn new(data: &Dataset) -> Self {
        let d = data.samples.len();
        let (p, n) = (data.provenance.measurement.pilots.pilots, data.provenance.measurement.distances.len);
        let mut y = DMatrix::zeros(p, d);
        let mut x_true = DMatrix::zeros(n, d);
        for (j, s) in data.samples.iter().enumerate() {
            y.set_column(j, &s.y);
            x_true.set_column(j, &s.x);
        }
        Self {
            y,
            x_true,
            x: DMatrix::zeros(n, d),
            v: DMatrix::zeros(p, d),
            onsager: vec![0.0; d],
        }
    }

    fn len(&self) -> usize {
        self.y.ncols()
    }

    fn gather(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
    }

    fn eval(&self, phi: &DMatrix<f64>, layer: &LampLayer, cols: Option<&[usize]>) -> LayerEval {
        let (y, x, v_prev, onsager): (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) = match cols {
            Some(c) => (
                Self::gather(&self.y, c),
                Self::gather(&self.x, c),
                Self::gather(&self.v, c),
                c.iter().map(|&j| self.onsager[j]).collect(),
            ),
            None => (self.y.clone(), self.x.clone(), self.v.clone(), self.onsager.clone()),
        };
        let p = y.nrows();
        let mut v = y - phi * &x;
        for (j, b) in onsager.iter().enumerate() {
            if *b != 0.0 {
                let prev = v_prev.column(j);
                v.column_mut(j).axpy(*b, &prev, 1.0);
            }
        }
        let sigma: Vec<f64> = v.column_iter().map(|c| c.norm() / (p as f64).sqrt()).collect();
        let r = x + &layer.b * &v;
        let mut x_hat = r.clone();
        for (j, mut col) in x_hat.column_iter_mut().enumerate() {
            let tau = layer.zeta * sigma[j];
            col.apply(|e| *e = super::shrink(*e, tau));
        }
        LayerEval { v, sigma, r, x_hat }
    }

    fn truth(&self, cols: Option<&[usize]>) -> DMatrix<f64> {
        match cols {
            Some(c) => Self::gather(&self.x_true, c),
            None => self.x_true.clone(),
        }
    }

    fn advance(&mut self, phi: &DMatrix<f64>, layer: &LampLayer) {
        let out = self.eval(phi, layer, None);
        let p = self.y.nrows() as f64;
        self.onsager = out
            .x_hat
            .column_iter()
            .map(|c| c.iter().filter(|v| v.abs() > L0_EPS).count() as f64 / p)
            .collect();
        self.x = out.x_hat;
        self.v = out.v;
    }

    /// `(mean squared error, NMSE)` of the layer over every sample.
    fn losses(&self, phi: &DMatrix<f64>, layer: &LampLayer) -> Result<(f64, f64)> {
        let out = self.eval(phi, layer, None);
        let mut total = 0.0;
        let mut ratio = 0.0;
        let mut nmse_defined = true;
        for (j, col) in out.x_hat.column_iter().enumerate() {
            let truth = self.x_true.column(j);
            let err = (col - truth).norm_squared();
            total += err;
            let power = truth.norm_squared();
            if power > 0.0 {
                ratio += err / power;
            } else {
                nmse_defined = false;
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite { iteration: 0 });
        }
        let d = self.len() as f64;
        Ok((total / d, if nmse_defined { ratio / d } else { f64::NAN }))
    }
}

/// Minibatch gradient of the mean squared error w.r.t. `(B, zeta)`.
fn batch_gradient(out: &LayerEval, truth: &DMatrix<f64>, zeta: f64) -> (DMatrix<f64>, f64) {
    let scale = 2.0 / truth.ncols() as f64;
    let mut g = DMatrix::zeros(out.r.nrows(), out.r.ncols());
    let mut zeta_grad = 0.0;
    for j in 0..out.r.ncols() {
        let tau = zeta * out.sigma[j];
        let mut col_sum = 0.0;
        for i in 0..out.r.nrows() {
            let r = out.r[(i, j)];
            if r.abs() > tau {
                let gi = scale * (out.x_hat[(i, j)] - truth[(i, j)]);
                g[(i, j)] = gi;
                col_sum += gi * r.signum();
            }
        }
        zeta_grad -= out.sigma[j] * col_sum;
    }
    (g * out.v.transpose(), zeta_grad)
}

/// Trains a network layer by layer.
///
/// Each new layer starts at `(Phi^T, 1)` and is fitted alone for
/// `epochs_per_layer` epochs; the epoch with the lowest training loss
/// (initial point included) is kept. Growth stops when the new layer's
/// stopping metric exceeds the previous layer's (the probe is discarded),
/// when the training loss hits zero, or at `max_layers`.
pub fn train_layerwise(
    train: &Dataset,
    test: &Dataset,
    phi: &ObservationMatrix,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.samples.is_empty() || test.samples.is_empty() {
        return Err(Error::config("training and test sets must be non-empty"));
    }
    train
        .provenance
        .measurement
        .ensure_matches(phi.provenance(), "training set vs observation matrix")?;
    test.provenance
        .measurement
        .ensure_matches(phi.provenance(), "test set vs observation matrix")?;

    let a = phi.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train_prefix = Prefix::new(train);
    let mut test_prefix = Prefix::new(test);
    let mut kept: Vec<LampLayer> = Vec::new();
    let mut history = Vec::new();
    let mut previous_metric: Option<f64> = None;
    let mut layers = Vec::new();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_prefix.len()).collect();
    let mut stop_reason = StopReason::MaxLayers;

    for t in 1..=cfg.max_layers {
        let mut layer = LampLayer::fresh(a);
        let mut b_state = AdamState::new(layer.b.len());
        let mut zeta_state = AdamState::new(1);

        let (initial_loss, _) = train_prefix.losses(a, &layer)?;
        let (test0, test_nmse0) = test_prefix.losses(a, &layer)?;
        log.push(EpochRecord {
            layer: t,
            epoch: 0,
            train_loss: initial_loss,
            test_loss: test0,
            test_nmse: test_nmse0,
        });
        let mut best = (initial_loss, test0, layer.clone());

        for epoch in 1..=cfg.epochs_per_layer {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let out = train_prefix.eval(a, &layer, Some(batch));
                let truth = train_prefix.truth(Some(batch));
                let (gb, gz) = batch_gradient(&out, &truth, layer.zeta);
                adam_step(layer.b.as_mut_slice(), gb.as_slice(), &mut b_state, cfg);
                let mut z = [layer.zeta];
                adam_step(&mut z, &[gz], &mut zeta_state, cfg);
                layer.zeta = z[0].max(ZETA_FLOOR);
            }
            let (train_loss, _) = train_prefix.losses(a, &layer)?;
            let (test_loss, test_nmse) = test_prefix.losses(a, &layer)?;
            log.push(EpochRecord {
                layer: t,
                epoch,
                train_loss,
                test_loss,
                test_nmse,
            });
            if train_loss < best.0 {
                best = (train_loss, test_loss, layer.clone());
            }
        }

        let (trained_loss, test_loss, layer) = best;
        let metric = match cfg.stop_on {
            StopCriterion::TrainLoss => trained_loss,
            StopCriterion::TestLoss => test_loss,
        };
        let improves = previous_metric.is_none_or(|prev| metric <= prev);
        layers.push(LayerSummary {
            layer: t,
            initial_loss,
            trained_loss,
            test_loss,
            kept: improves,
        });
        if !improves {
            stop_reason = StopReason::NoImprovement;
            break;
        }
        train_prefix.advance(a, &layer);
        test_prefix.advance(a, &layer);
        kept.push(layer);
        history.push(trained_loss);
        previous_metric = Some(metric);
        if trained_loss == 0.0 {
            stop_reason = StopReason::ZeroLoss;
            break;
        }
    }

    Ok(TrainOutcome {
        params: LampParams::new(kept, *phi.provenance())?,
        loss_history: history,
        layers,
        log,
        stop_reason,
    })
}

#[cfg(test)]
pub(super) fn batch_gradient_for_tests(
    data: &Dataset,
    phi: &DMatrix<f64>,
    layer: &LampLayer,
) -> (DMatrix<f64>, f64) {
    let prefix = Prefix::new(data);
    let out = prefix.eval(phi, layer, None);
    batch_gradient(&out, &prefix.truth(None), layer.zeta)
}
