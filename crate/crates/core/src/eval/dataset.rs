use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{quantize_paths, random_channel, sample_pilots, ChannelGenConfig};
use crate::error::Result;
use crate::sensing::{add_noise, build_observation_matrix, MeasurementProvenance, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// ChaCha stream reserved for this split, so train and test draws never overlap.
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

/// Everything that determines the distribution of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub measurement: MeasurementProvenance,
    pub noise: NoiseSpec,
    pub channels: ChannelGenConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub measurement: MeasurementProvenance,
    pub noise: NoiseSpec,
    pub channels: ChannelGenConfig,
    pub seed: u64,
    pub split: Split,
}

impl DatasetProvenance {
    /// Checks that two datasets were drawn from the same model (seed and split may differ).
    pub fn ensure_same_distribution(&self, other: &DatasetProvenance) -> Result<()> {
        self.measurement.ensure_matches(&other.measurement, "datasets")?;
        if self.noise != other.noise || self.channels != other.channels {
            return Err(crate::Error::ProvenanceMismatch(format!(
                "datasets use different noise/channel models: {:?}/{:?} vs {:?}/{:?}",
                self.noise, self.channels, other.noise, other.channels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: DVector<f64>,
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub provenance: DatasetProvenance,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&DVector<f64>, &DVector<f64>)> {
        self.samples.iter().map(|s| (&s.y, &s.x))
    }
}

/// Draws `size` i.i.d. `(y, x)` pairs.
///
/// On-grid channels are measured as `Phi x + w`; off-grid ones through the
/// continuous frequency response, so the grid mismatch shows up in `y`.
pub fn generate_dataset(spec: &DatasetSpec, split: Split, size: usize) -> Result<Dataset> {
    let m = &spec.measurement;
    spec.channels.validate(&m.distances)?;
    let phi = build_observation_matrix(&m.pilots, &m.distances, &m.attenuation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split.stream());
    let mut samples = Vec::with_capacity(size);
    for _ in 0..size {
        let channel = random_channel(&mut rng, &spec.channels, &m.distances)?;
        let x = quantize_paths(&channel, &m.distances, &m.pilots, &m.attenuation)?.into_vector();
        let clean = if spec.channels.off_grid {
            sample_pilots(&channel, &m.pilots, &m.attenuation)
        } else {
            phi.matrix() * &x
        };
        let y = add_noise(clean, &spec.noise, &mut rng);
        samples.push(Sample { y, x });
    }
    Ok(Dataset {
        provenance: DatasetProvenance {
            measurement: spec.measurement,
            noise: spec.noise,
            channels: spec.channels,
            seed: spec.seed,
            split,
        },
        samples,
    })
}
