use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, Dataset, Split};
use super::metrics::nmse;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::lamp::{forward, train_layerwise, TrainConfig};
use crate::sensing::{build_observation_matrix, ObservationMatrix};
use crate::solvers::{amp, default_ridge, ls_estimate, omp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "omp")]
    Omp,
    #[serde(rename = "amp")]
    Amp,
    #[serde(rename = "sl-uvce")]
    SlUvce,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Ls, Scheme::Omp, Scheme::Amp, Scheme::SlUvce];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ls => "ls",
            Scheme::Omp => "omp",
            Scheme::Amp => "amp",
            Scheme::SlUvce => "sl-uvce",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scheme {s:?} (expected ls, omp, amp or sl-uvce)")))
    }
}

/// Knobs of the non-learned baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSettings {
    /// Ridge weight for LS; `1e-6 trace(Phi^T Phi) / N` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    /// OMP atom budget; the true path count when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omp_atoms: Option<usize>,
    pub omp_tol: f64,
    pub amp_iterations: usize,
    pub amp_zeta: f64,
    /// Estimates at or below this magnitude are not turned into paths.
    pub path_threshold: f64,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self {
            ridge: None,
            omp_atoms: None,
            omp_tol: 0.0,
            amp_iterations: 10,
            amp_zeta: 1.0,
            path_threshold: 1e-6,
        }
    }
}

impl SchemeSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.ridge {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::config(format!("ridge must be >= 0, got {r}")));
            }
        }
        if self.omp_atoms == Some(0) {
            return Err(Error::config("omp_atoms must be >= 1"));
        }
        if self.amp_iterations < 1 {
            return Err(Error::config("amp_iterations must be >= 1"));
        }
        if !(self.amp_zeta.is_finite() && self.amp_zeta >= 0.0) {
            return Err(Error::config("amp_zeta must be >= 0"));
        }
        if !(self.path_threshold.is_finite() && self.path_threshold >= 0.0) {
            return Err(Error::config("path_threshold must be >= 0"));
        }
        Ok(())
    }
}

/// Estimates every test measurement with one scheme. SL-UVCE is trained on
/// `train` first. Untrained AMP that diverges yields an infinite estimate.
pub fn run_scheme(
    scheme: Scheme,
    phi: &ObservationMatrix,
    train: &Dataset,
    test: &Dataset,
    settings: &SchemeSettings,
    train_cfg: &TrainConfig,
) -> Result<Vec<DVector<f64>>> {
    let a = phi.matrix();
    let n = phi.cols();
    match scheme {
        Scheme::Ls => {
            let ridge = settings.ridge.unwrap_or_else(|| default_ridge(a));
            test.samples
                .iter()
                .map(|s| ls_estimate(&s.y, a, ridge).map(|r| r.estimate))
                .collect()
        }
        Scheme::Omp => {
            let k = settings
                .omp_atoms
                .unwrap_or(test.provenance.channels.paths)
                .min(phi.rows().min(n));
            test.samples
                .iter()
                .map(|s| omp(&s.y, a, k, settings.omp_tol).map(|r| r.estimate))
                .collect()
        }
        Scheme::Amp => test
            .samples
            .iter()
            .map(|s| match amp(&s.y, a, settings.amp_iterations, settings.amp_zeta) {
                Ok(out) => Ok(out.result.estimate),
                Err(Error::NonFinite { .. }) => Ok(DVector::from_element(n, f64::INFINITY)),
                Err(e) => Err(e),
            })
            .collect(),
        Scheme::SlUvce => {
            let outcome = train_layerwise(train, test, phi, train_cfg)?;
            test.samples
                .iter()
                .map(|s| forward(&s.y, a, &outcome.params).map(|(x, _)| x))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Pilots,
    Paths,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Pilots => "pilots",
            SweepVariable::Paths => "paths",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pilots" => Ok(SweepVariable::Pilots),
            "paths" => Ok(SweepVariable::Paths),
            other => Err(Error::config(format!("unknown sweep variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub value: usize,
    pub nmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
    pub test_size: usize,
    pub rows: Vec<ReportRow>,
}

impl SweepReport {
    pub const HEADER: &'static str = "scheme,sweep_variable,sweep_value,nmse,seconds,seed";

    pub fn get(&self, scheme: Scheme, value: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.value == value)
    }

    pub fn nmse(&self, scheme: Scheme, value: usize) -> Option<f64> {
        self.get(scheme, value).map(|r| r.nmse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.9e},{:.6},{}\n",
                r.scheme,
                self.variable.name(),
                r.value,
                r.nmse,
                r.seconds,
                self.seed
            ));
        }
        out
    }
}

/// Runs one sweep as configured in `cfg.sweep`.
///
/// Every point gets a fresh observation matrix and fresh datasets drawn from
/// `cfg.seed`; all schemes at a point see the same test set. Points run in
/// parallel and are merged in sweep order.
pub fn sweep(cfg: &ExperimentConfig, variable: SweepVariable) -> Result<SweepReport> {
    let s = &cfg.sweep;
    let values = match variable {
        SweepVariable::Pilots => s.pilot_values.clone(),
        SweepVariable::Paths => s.path_values.clone(),
    };
    if values.is_empty() || s.schemes.is_empty() {
        return Err(Error::config("a sweep needs at least one value and one scheme"));
    }
    let points: Vec<Vec<ReportRow>> = values
        .par_iter()
        .map(|&value| sweep_point(cfg, variable, value))
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        variable,
        values,
        schemes: s.schemes.clone(),
        seed: cfg.seed,
        test_size: cfg.train.test_size,
        rows: points.into_iter().flatten().collect(),
    })
}

pub fn sweep_pilots(cfg: &ExperimentConfig) -> Result<SweepReport> {
    sweep(cfg, SweepVariable::Pilots)
}

pub fn sweep_paths(cfg: &ExperimentConfig) -> Result<SweepReport> {
    sweep(cfg, SweepVariable::Paths)
}

fn sweep_point(cfg: &ExperimentConfig, variable: SweepVariable, value: usize) -> Result<Vec<ReportRow>> {
    let setup = match variable {
        SweepVariable::Pilots => cfg.setup_with(Some(value), Some(cfg.sweep.pilot_sweep_paths))?,
        SweepVariable::Paths => cfg.setup_with(Some(cfg.sweep.path_sweep_pilots), Some(value))?,
    };
    let m = &setup.measurement;
    let phi = build_observation_matrix(&m.pilots, &m.distances, &m.attenuation)?;
    let spec = setup.dataset_spec(cfg.seed);
    let train = generate_dataset(&spec, Split::Train, cfg.train.train_size)?;
    let test = generate_dataset(&spec, Split::Test, cfg.train.test_size)?;
    let truths: Vec<DVector<f64>> = test.samples.iter().map(|s| s.x.clone()).collect();

    cfg.sweep
        .schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let estimates = run_scheme(scheme, &phi, &train, &test, &cfg.solvers, &cfg.train)?;
            let seconds = if cfg.sweep.timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            Ok(ReportRow {
                scheme,
                value,
                nmse: nmse(&estimates, &truths)?,
                seconds,
            })
        })
        .collect()
}
