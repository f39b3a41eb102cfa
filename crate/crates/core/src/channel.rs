//! Synthetic multipath channels and their distance-domain representation.
//!
//! The channel frequency response of an underwater optical link is modeled as
//! a sum of decaying exponentials, one per propagation path:
//!
//! ```text
//! H(f) = sum_l alpha_l * exp(-(c1 * f + c2) * s_l)
//! ```
//!
//! Quantizing the path distances onto a grid of step `delta_s` turns the
//! channel into a sparse vector `x` ("sparse proxy") whose nonzeros sit at
//! the grid indices of the paths.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when mapping a distance onto the grid, so that `k * delta_s`
/// computed in floating point maps back to `k`.
const GRID_SLACK: f64 = 1e-9;

/// Quasi-linear fit of the total attenuation coefficient, `c(f) = c1 * f + c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationModel {
    /// Slope in 1/(m*Hz).
    pub c1: f64,
    /// Intercept in 1/m.
    pub c2: f64,
}

impl AttenuationModel {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c1 >= 0.0) {
            return Err(Error::config(format!("c1 must be finite and >= 0, got {c1}")));
        }
        if !(c2.is_finite() && c2 > 0.0) {
            return Err(Error::config(format!("c2 must be finite and > 0, got {c2}")));
        }
        Ok(Self { c1, c2 })
    }

    /// Picks `c1` so that `c1 * delta_f * delta_s` equals `coherence` on the
    /// given grids. The product is the per-step decay rate of the observation
    /// matrix columns and controls how coherent they are.
    pub fn from_coherence(
        coherence: f64,
        c2: f64,
        pilots: &PilotGrid,
        distances: &DistanceGrid,
    ) -> Result<Self> {
        if !(coherence.is_finite() && coherence >= 0.0) {
            return Err(Error::config(format!(
                "coherence must be finite and >= 0, got {coherence}"
            )));
        }
        Self::new(coherence / (pilots.spacing() * distances.delta_s), c2)
    }

    /// Per-meter attenuation at frequency `f`.
    pub fn attenuation_at(&self, f: f64) -> f64 {
        self.c1 * f + self.c2
    }

    /// `c1 * f_min + c2`, the decay rate of the sparse-proxy envelope.
    pub fn base_rate(&self, pilots: &PilotGrid) -> f64 {
        self.attenuation_at(pilots.f_min)
    }
}

/// Per-meter attenuation coefficient at `f`.
pub fn attenuation_at(f: f64, model: &AttenuationModel) -> f64 {
    model.attenuation_at(f)
}

/// `pilots` uniformly spaced subcarriers spanning `[f_min, f_max]`.
///
/// Pilots are indexed `1..=pilots` and pilot `i` sits at `f_min + i * delta_f`,
/// which puts the last pilot one spacing above `f_max`. This matches the row
/// exponents of the observation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub pilots: usize,
}

impl PilotGrid {
    pub fn new(f_min: f64, f_max: f64, pilots: usize) -> Result<Self> {
        if !(f_min.is_finite() && f_max.is_finite() && f_min >= 0.0) {
            return Err(Error::config(format!(
                "pilot band must be finite and non-negative, got [{f_min}, {f_max}]"
            )));
        }
        if f_max <= f_min {
            return Err(Error::config(format!(
                "f_max ({f_max}) must exceed f_min ({f_min})"
            )));
        }
        if pilots < 2 {
            return Err(Error::config(format!("need at least 2 pilots, got {pilots}")));
        }
        Ok(Self {
            f_min,
            f_max,
            pilots,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.f_max - self.f_min) / (self.pilots - 1) as f64
    }

    /// Frequency of pilot `i` (1-based).
    pub fn frequency(&self, i: usize) -> f64 {
        self.f_min + i as f64 * self.spacing()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.pilots).map(|i| self.frequency(i))
    }
}

/// Quantized distance axis `{0, delta_s, ..., (len - 1) * delta_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub delta_s: f64,
    pub s_max: f64,
    pub len: usize,
}

impl DistanceGrid {
    pub fn new(s_max: f64, delta_s: f64) -> Result<Self> {
        if !(delta_s.is_finite() && delta_s > 0.0) {
            return Err(Error::config(format!("delta_s must be > 0, got {delta_s}")));
        }
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(Error::config(format!("s_max must be > 0, got {s_max}")));
        }
        let len = (s_max / delta_s - GRID_SLACK).ceil().max(1.0) as usize;
        Ok(Self {
            delta_s,
            s_max,
            len,
        })
    }

    /// Grid index `floor(s / delta_s)`.
    pub fn index_of(&self, s: f64) -> usize {
        (s / self.delta_s + GRID_SLACK).floor() as usize
    }

    pub fn distance(&self, k: usize) -> f64 {
        k as f64 * self.delta_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Dimensionless attenuation factor.
    pub alpha: f64,
    /// Propagation distance in meters.
    pub distance: f64,
}

/// The physical channel: a list of propagation paths.
///
/// Sets produced by [`reconstruct_paths`] may be empty or carry non-positive
/// `alpha` when the estimate they came from does.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::config("a channel needs at least one path"));
        }
        for (l, p) in paths.iter().enumerate() {
            if !(p.alpha.is_finite() && p.alpha > 0.0) {
                return Err(Error::config(format!(
                    "path {l}: alpha must be > 0, got {}",
                    p.alpha
                )));
            }
            if !(p.distance.is_finite() && p.distance >= 0.0) {
                return Err(Error::config(format!(
                    "path {l}: distance must be >= 0, got {}",
                    p.distance
                )));
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Length-N distance-domain vector whose nonzeros encode the path amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProxy(pub DVector<f64>);

impl SparseProxy {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    /// Indices with a nonzero entry, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl From<DVector<f64>> for SparseProxy {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Frequency response of `channel` at `f`.
pub fn cfr_at(f: f64, channel: &PathSet, model: &AttenuationModel) -> f64 {
    let rate = model.attenuation_at(f);
    channel
        .paths()
        .iter()
        .map(|p| p.alpha * (-rate * p.distance).exp())
        .sum()
}

/// Noiseless pilot measurements `[H(f_1), ..., H(f_P)]`.
pub fn sample_pilots(
    channel: &PathSet,
    pilots: &PilotGrid,
    model: &AttenuationModel,
) -> DVector<f64> {
    DVector::from_iterator(
        pilots.pilots,
        pilots.frequencies().map(|f| cfr_at(f, channel, model)),
    )
}

/// Maps a channel onto the distance grid.
///
/// Entry `k = floor(s_l / delta_s)` receives `alpha_l * exp(-(c1 f_min + c2) k delta_s)`.
pub fn quantize_paths(
    channel: &PathSet,
    grid: &DistanceGrid,
    pilots: &PilotGrid,
    model: &AttenuationModel,
) -> Result<SparseProxy> {
    let rate = model.base_rate(pilots);
    let mut x = DVector::zeros(grid.len);
    let mut owner: Vec<Option<usize>> = vec![None; grid.len];
    for (l, p) in channel.paths().iter().enumerate() {
        let k = grid.index_of(p.distance);
        if k >= grid.len {
            return Err(Error::OutOfGrid {
                path: l,
                distance: p.distance,
                grid_len: grid.len,
            });
        }
        if let Some(first) = owner[k] {
            return Err(Error::IndexCollision {
                index: k,
                first,
                second: l,
            });
        }
        owner[k] = Some(l);
        x[k] = p.alpha * (-rate * grid.distance(k)).exp();
    }
    Ok(SparseProxy(x))
}

/// Inverse of [`quantize_paths`]: every entry with `|x_k| > threshold` becomes
/// a path at `k * delta_s`.
pub fn reconstruct_paths(
    estimate: &SparseProxy,
    grid: &DistanceGrid,
    pilots: &PilotGrid,
    model: &AttenuationModel,
    threshold: f64,
) -> PathSet {
    let rate = model.base_rate(pilots);
    let paths = estimate
        .0
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(k, &v)| {
            let distance = grid.distance(k);
            Path {
                alpha: v * (rate * distance).exp(),
                distance,
            }
        })
        .collect();
    PathSet { paths }
}

/// Distribution of synthetic channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGenConfig {
    /// Number of paths L.
    pub paths: usize,
    /// Uniform range of the line-of-sight (shortest) path's alpha.
    pub los_alpha: (f64, f64),
    /// Uniform range of every other path's alpha.
    pub nlos_alpha: (f64, f64),
    /// Jitter distances inside their grid cell instead of sitting on it.
    pub off_grid: bool,
}

impl Default for ChannelGenConfig {
    fn default() -> Self {
        Self {
            paths: 6,
            los_alpha: (0.5, 1.0),
            nlos_alpha: (0.05, 0.5),
            off_grid: false,
        }
    }
}

impl ChannelGenConfig {
    pub fn validate(&self, grid: &DistanceGrid) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::config("path count must be >= 1"));
        }
        if self.paths > grid.len {
            return Err(Error::config(format!(
                "{} paths cannot occupy distinct cells of a {}-point grid",
                self.paths, grid.len
            )));
        }
        for (name, (lo, hi)) in [("los_alpha", self.los_alpha), ("nlos_alpha", self.nlos_alpha)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
                return Err(Error::config(format!(
                    "{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a random channel with distinct grid cells, sorted by distance.
/// The shortest path is the line-of-sight one.
pub fn random_channel<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ChannelGenConfig,
    grid: &DistanceGrid,
) -> Result<PathSet> {
    cfg.validate(grid)?;
    let mut cells = rand::seq::index::sample(rng, grid.len, cfg.paths).into_vec();
    cells.sort_unstable();
    let paths = cells
        .into_iter()
        .enumerate()
        .map(|(l, k)| {
            let alpha = if l == 0 {
                uniform(rng, cfg.los_alpha)
            } else {
                uniform(rng, cfg.nlos_alpha)
            };
            let distance = if cfg.off_grid {
                (k as f64 + 0.999 * rng.random::<f64>()) * grid.delta_s
            } else {
                grid.distance(k)
            };
            Path { alpha, distance }
        })
        .collect();
    Ok(PathSet { paths })
}
