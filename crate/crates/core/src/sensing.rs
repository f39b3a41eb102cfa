//! Compressed-sensing measurement model `y = Phi x + w`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{AttenuationModel, DistanceGrid, PilotGrid};
use crate::error::{Error, Result};

/// Everything needed to rebuild an observation matrix. Stored in datasets and
/// checkpoints instead of the matrix itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProvenance {
    pub pilots: PilotGrid,
    pub distances: DistanceGrid,
    pub attenuation: AttenuationModel,
}

impl MeasurementProvenance {
    /// `c1 * delta_f * delta_s`, the per-grid-step decay of each column.
    pub fn coherence(&self) -> f64 {
        self.attenuation.c1 * self.pilots.spacing() * self.distances.delta_s
    }

    pub fn ensure_matches(&self, other: &MeasurementProvenance, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ProvenanceMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )))
        }
    }
}

/// The P x N matrix with entries `Phi[i-1, k] = v_k^i`, `v_k = exp(-c1 delta_f delta_s k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    matrix: DMatrix<f64>,
    base: DVector<f64>,
    provenance: MeasurementProvenance,
}

impl ObservationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The base vector `v`; row `i` is its elementwise `i`-th power.
    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn provenance(&self) -> &MeasurementProvenance {
        &self.provenance
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn build_observation_matrix(
    pilots: &PilotGrid,
    distances: &DistanceGrid,
    attenuation: &AttenuationModel,
) -> Result<ObservationMatrix> {
    let (p, n) = (pilots.pilots, distances.len);
    if p < 1 || n < 1 {
        return Err(Error::config(format!("observation matrix must be non-empty, got {p}x{n}")));
    }
    let provenance = MeasurementProvenance {
        pilots: *pilots,
        distances: *distances,
        attenuation: *attenuation,
    };
    let kappa = provenance.coherence();
    let base = DVector::from_fn(n, |k, _| (-kappa * k as f64).exp());
    let matrix = DMatrix::from_fn(p, n, |r, k| (-kappa * k as f64 * (r + 1) as f64).exp());
    Ok(ObservationMatrix {
        matrix,
        base,
        provenance,
    })
}

/// Additive white Gaussian noise level relative to the clean measurement power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `+inf` means noiseless.
    #[serde(with = "snr_repr")]
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::config(format!("snr_db must be finite or +inf, got {snr_db}")));
        }
        Ok(Self { snr_db })
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }
}

/// JSON has no infinity; write it as the string "inf".
mod snr_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Finite(*v).serialize(s)
        } else {
            Repr::Text("inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad snr_db {t:?}"))),
        }
    }
}

/// `y = Phi x + w`, with `w` scaled so that `10 log10(|Phi x|^2 / E|w|^2) = snr_db`.
pub fn measure<R: Rng + ?Sized>(
    phi: &DMatrix<f64>,
    x: &DVector<f64>,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.len() != phi.ncols() {
        return Err(Error::DimensionMismatch {
            context: "measure",
            expected: phi.ncols(),
            actual: x.len(),
        });
    }
    Ok(add_noise(phi * x, noise, rng))
}

/// Adds white Gaussian noise at `noise.snr_db` relative to the mean power of `clean`.
pub fn add_noise<R: Rng + ?Sized>(mut clean: DVector<f64>, noise: &NoiseSpec, rng: &mut R) -> DVector<f64> {
    if noise.is_noiseless() || clean.is_empty() {
        return clean;
    }
    let power = clean.norm_squared() / clean.len() as f64;
    let std = (power / 10f64.powf(noise.snr_db / 10.0)).sqrt();
    for v in clean.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v += std * g;
    }
    clean
}

/// Largest normalized inner product between two distinct columns.
pub fn mutual_incoherence(phi: &DMatrix<f64>) -> Result<f64> {
    let mut unit = phi.clone();
    for (k, mut col) in unit.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateColumn(k));
        }
        col /= norm;
    }
    let gram = unit.transpose() * &unit;
    let mut mu = 0.0f64;
    for k in 0..gram.ncols() {
        for j in 0..k {
            mu = mu.max(gram[(j, k)].abs());
        }
    }
    Ok(mu.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_like(pilots: usize, coherence: f64) -> ObservationMatrix {
        let g = PilotGrid::new(2e6, 30e6, pilots).unwrap();
        let d = DistanceGrid::new(12.0, 0.1).unwrap();
        let m = AttenuationModel::from_coherence(coherence, 0.15, &g, &d).unwrap();
        build_observation_matrix(&g, &d, &m).unwrap()
    }

    #[test]
    fn flat_attenuation_gives_all_ones() {
        let phi = default_like(16, 0.0);
        assert!(phi.matrix().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn structural_invariants() {
        let phi = default_like(64, 1e-3);
        let m = phi.matrix();
        assert!(m.column(0).iter().all(|v| *v == 1.0));
        assert!(m.iter().all(|v| *v > 0.0 && *v <= 1.0));
        for k in 0..phi.cols() {
            let vk = phi.base()[k];
            for i in 0..phi.rows() {
                let expect = vk.powi(i as i32 + 1);
                assert!((m[(i, k)] - expect).abs() <= 1e-12 * expect);
                if i + 1 < phi.rows() {
                    assert!((m[(i + 1, k)] / m[(i, k)] - vk).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_by_two_example() {
        // delta_f = 1 Hz, delta_s = 0.5 m, c1 = 2 ln 2 gives a per-step decay of ln 2.
        let g = PilotGrid::new(0.0, 1.0, 2).unwrap();
        let d = DistanceGrid::new(1.0, 0.5).unwrap();
        let m = AttenuationModel::new(2.0 * std::f64::consts::LN_2, 0.1).unwrap();
        let phi = build_observation_matrix(&g, &d, &m).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, 0.25]);
        assert!((phi.matrix() - want).abs().max() < 1e-15);
    }

    #[test]
    fn measure_noiseless_examples() {
        let phi = default_like(32, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = NoiseSpec::noiseless();
        let zero = measure(phi.matrix(), &DVector::zeros(phi.cols()), &n, &mut rng).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let mut e0 = DVector::zeros(phi.cols());
        e0[0] = 1.0;
        let y = measure(phi.matrix(), &e0, &n, &mut rng).unwrap();
        assert!(y.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn measure_rejects_wrong_length() {
        let phi = default_like(8, 1e-3);
        let r = measure(phi.matrix(), &DVector::zeros(3), &NoiseSpec::noiseless(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 120, actual: 3, .. })));
    }

    #[test]
    fn snr_calibration() {
        let phi = default_like(64, 1e-3);
        let mut x = DVector::zeros(phi.cols());
        x[2] = 0.9;
        x[40] = 0.3;
        x[77] = 0.1;
        let clean = phi.matrix() * &x;
        let noise = NoiseSpec::new(20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 1000;
        let mean: f64 = (0..draws)
            .map(|_| {
                let y = measure(phi.matrix(), &x, &noise, &mut rng).unwrap();
                (y - &clean).norm_squared() / clean.norm_squared()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 0.01).abs() < 0.002, "mean relative noise power {mean}");
    }

    #[test]
    fn incoherence_examples() {
        assert_eq!(mutual_incoherence(&DMatrix::identity(5, 5)).unwrap(), 0.0);
        let mut m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, 1.0, 1.0, -1.0, -2.0, 3.0]);
        assert!((mutual_incoherence(&m).unwrap() - 1.0).abs() < 1e-12);
        m.column_mut(2).fill(0.0);
        assert!(matches!(mutual_incoherence(&m), Err(Error::DegenerateColumn(2))));
    }

    #[test]
    fn default_matrix_is_highly_coherent() {
        let mu = mutual_incoherence(default_like(64, 1e-3).matrix()).unwrap();
        assert!(mu > 0.9 && mu < 1.0, "mu = {mu}");
    }

    #[test]
    fn incoherence_ignores_column_scaling() {
        let phi = default_like(24, 5e-3);
        let mu = mutual_incoherence(phi.matrix()).unwrap();
        let mut scaled = phi.matrix().clone();
        scaled.column_mut(17).scale_mut(37.5);
        scaled.column_mut(3).scale_mut(1e-3);
        assert!((mutual_incoherence(&scaled).unwrap() - mu).abs() < 1e-12);
    }

    #[test]
    fn noise_spec_json_handles_infinity() {
        let s = serde_json::to_string(&NoiseSpec::noiseless()).unwrap();
        assert_eq!(s, r#"{"snr_db":"inf"}"#);
        let back: NoiseSpec = serde_json::from_str(&s).unwrap();
        assert!(back.is_noiseless());
        let back: NoiseSpec = serde_json::from_str(r#"{"snr_db":30.0}"#).unwrap();
        assert_eq!(back.snr_db, 30.0);
    }
}
