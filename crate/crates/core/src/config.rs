//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//!
//! [channel]
//! f_min = 2e6
//! f_max = 30e6
//! pilots = 64
//! delta_s = 0.1
//! s_max = 12.0
//! c2 = 0.15
//! coherence = 1e-3   # c1 * delta_f * delta_s at `pilots`; ignored when c1 is set
//! paths = 6
//! los_alpha = [0.5, 1.0]
//! nlos_alpha = [0.05, 0.5]
//! snr_db = 30.0      # inf for noiseless
//! ```
//!
//! Every field has a default, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{AttenuationModel, ChannelGenConfig, DistanceGrid, PilotGrid};
use crate::error::{Error, Result};
use crate::eval::{DatasetSpec, Scheme, SchemeSettings};
use crate::lamp::TrainConfig;
use crate::sensing::{MeasurementProvenance, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub f_min: f64,
    pub f_max: f64,
    pub pilots: usize,
    pub delta_s: f64,
    pub s_max: f64,
    pub c2: f64,
    pub coherence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    pub paths: usize,
    pub los_alpha: (f64, f64),
    pub nlos_alpha: (f64, f64),
    pub off_grid: bool,
    pub snr_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let gen = ChannelGenConfig::default();
        Self {
            f_min: 2e6,
            f_max: 30e6,
            pilots: 64,
            delta_s: 0.1,
            s_max: 12.0,
            c2: 0.15,
            coherence: 1e-3,
            c1: None,
            paths: gen.paths,
            los_alpha: gen.los_alpha,
            nlos_alpha: gen.nlos_alpha,
            off_grid: gen.off_grid,
            snr_db: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub pilot_values: Vec<usize>,
    /// Path count used throughout the pilot sweep.
    pub pilot_sweep_paths: usize,
    pub path_values: Vec<usize>,
    /// Pilot count used throughout the path sweep.
    pub path_sweep_pilots: usize,
    pub schemes: Vec<Scheme>,
    /// Record wall time per point; when off the seconds column is 0 and
    /// reports are byte-reproducible.
    pub timing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            pilot_values: vec![30, 40, 50, 60, 70, 80, 90],
            pilot_sweep_paths: 6,
            path_values: vec![2, 4, 6, 8, 10, 12],
            path_sweep_pilots: 64,
            schemes: Scheme::ALL.to_vec(),
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub channel: ChannelSection,
    pub train: TrainConfig,
    pub solvers: SchemeSettings,
    pub sweep: SweepSection,
}

/// Fully resolved model for one experiment point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    pub measurement: MeasurementProvenance,
    pub noise: NoiseSpec,
    pub channels: ChannelGenConfig,
}

impl Setup {
    pub fn dataset_spec(&self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            measurement: self.measurement,
            noise: self.noise,
            channels: self.channels,
            seed,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::parse(path, m),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let setup = self.setup()?;
        setup.channels.validate(&setup.measurement.distances)?;
        self.train.validate()?;
        self.solvers.validate()?;
        Ok(())
    }

    /// Slope of the attenuation fit. Derived from `coherence` on the base
    /// pilot grid unless given explicitly, and then held fixed when the
    /// pilot count changes.
    pub fn attenuation(&self) -> Result<AttenuationModel> {
        let c = &self.channel;
        match c.c1 {
            Some(c1) => AttenuationModel::new(c1, c.c2),
            None => {
                let base = PilotGrid::new(c.f_min, c.f_max, c.pilots)?;
                let grid = DistanceGrid::new(c.s_max, c.delta_s)?;
                AttenuationModel::from_coherence(c.coherence, c.c2, &base, &grid)
            }
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        self.setup_with(None, None)
    }

    /// Resolves the model with optional pilot-count and path-count overrides.
    pub fn setup_with(&self, pilots: Option<usize>, paths: Option<usize>) -> Result<Setup> {
        let c = &self.channel;
        let measurement = MeasurementProvenance {
            pilots: PilotGrid::new(c.f_min, c.f_max, pilots.unwrap_or(c.pilots))?,
            distances: DistanceGrid::new(c.s_max, c.delta_s)?,
            attenuation: self.attenuation()?,
        };
        let channels = ChannelGenConfig {
            paths: paths.unwrap_or(c.paths),
            los_alpha: c.los_alpha,
            nlos_alpha: c.nlos_alpha,
            off_grid: c.off_grid,
        };
        Ok(Setup {
            measurement,
            noise: NoiseSpec::new(c.snr_db)?,
            channels,
        })
    }
}
