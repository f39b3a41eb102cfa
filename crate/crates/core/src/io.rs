//! On-disk formats.
//!
//! * datasets and checkpoints: versioned JSON, floats written exactly;
//! * measurements, estimates, reports, logs, matrices and traces: CSV with
//!   optional `#` preamble lines carrying provenance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{reconstruct_paths, SparseProxy};
use crate::error::{Error, Result};
use crate::eval::{Dataset, DatasetProvenance, Sample, SweepReport};
use crate::lamp::{EpochRecord, LampLayer, LampParams, TrainConfig};
use crate::sensing::{MeasurementProvenance, ObservationMatrix};
use crate::solvers::{l0_norm, LayerTrace};

const DATASET_FORMAT: &str = "uvlc-dataset";
const CHECKPOINT_FORMAT: &str = "uvlc-lamp-checkpoint";
const FORMAT_VERSION: u32 = 1;

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, format: &str, version: u32, want: &str) -> Result<()> {
    if format != want {
        return Err(Error::parse(path, format!("expected a {want} file, found {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::parse(path, format!("unsupported {want} version {version}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    y: Vec<f64>,
    x: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    provenance: DatasetProvenance,
    samples: Vec<SampleFile>,
}

pub fn dataset_to_json(data: &Dataset) -> String {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: FORMAT_VERSION,
        provenance: data.provenance,
        samples: data
            .samples
            .iter()
            .map(|s| SampleFile {
                y: s.y.as_slice().to_vec(),
                x: s.x.as_slice().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("dataset serializes")
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_text(path, &dataset_to_json(data))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file: DatasetFile = serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))?;
    check_header(path, &file.format, file.version, DATASET_FORMAT)?;
    let (p, n) = (
        file.provenance.measurement.pilots.pilots,
        file.provenance.measurement.distances.len,
    );
    let samples = file
        .samples
        .into_iter()
        .enumerate()
        .map(|(d, s)| {
            if s.y.len() != p || s.x.len() != n {
                return Err(Error::parse(path, format!("sample {d} has the wrong dimensions")));
            }
            Ok(Sample {
                y: DVector::from_vec(s.y),
                x: DVector::from_vec(s.x),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        provenance: file.provenance,
        samples,
    })
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    zeta: f64,
    rows: usize,
    cols: usize,
    /// Row-major entries of B.
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    depth: usize,
    provenance: MeasurementProvenance,
    train: TrainConfig,
    loss_history: Vec<f64>,
    layers: Vec<LayerFile>,
}

/// A trained network plus what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: LampParams,
    pub train: TrainConfig,
    pub loss_history: Vec<f64>,
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> String {
    let layers = ckpt
        .params
        .layers()
        .iter()
        .map(|l| LayerFile {
            zeta: l.zeta,
            rows: l.b.nrows(),
            cols: l.b.ncols(),
            b: l.b.transpose().as_slice().to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: FORMAT_VERSION,
        depth: ckpt.params.depth(),
        provenance: *ckpt.params.provenance(),
        train: ckpt.train.clone(),
        loss_history: ckpt.loss_history.clone(),
        layers,
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_text(path, &checkpoint_to_json(ckpt))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file: CheckpointFile = serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))?;
    check_header(path, &file.format, file.version, CHECKPOINT_FORMAT)?;
    if file.depth != file.layers.len() {
        return Err(Error::parse(path, "depth does not match the number of layers"));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            if l.b.len() != l.rows * l.cols {
                return Err(Error::parse(path, "layer matrix has the wrong number of entries"));
            }
            Ok(LampLayer {
                b: DMatrix::from_row_slice(l.rows, l.cols, &l.b),
                zeta: l.zeta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Checkpoint {
        params: LampParams::new(layers, file.provenance).map_err(|e| Error::parse(path, e))?,
        train: file.train,
        loss_history: file.loss_history,
    })
}

/// Splits a CSV file into `# key=value` preamble entries and data lines.
fn split_preamble(text: &str) -> (Vec<(String, String)>, Vec<&str>) {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else if !line.trim().is_empty() {
            rows.push(line);
        }
    }
    (meta, rows)
}

fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn provenance_line(p: &MeasurementProvenance) -> String {
    format!("# provenance={}\n", serde_json::to_string(p).expect("provenance serializes"))
}

fn parse_provenance(path: &Path, meta: &[(String, String)]) -> Result<MeasurementProvenance> {
    let raw = meta_value(meta, "provenance").ok_or_else(|| Error::parse(path, "missing provenance line"))?;
    serde_json::from_str(raw).map_err(|e| Error::parse(path, e))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad number {s:?}")))
}

/// A batch of pilot measurements sharing one provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub provenance: MeasurementProvenance,
    pub samples: Vec<DVector<f64>>,
}

impl Measurements {
    pub fn from_dataset(data: &Dataset) -> Self {
        Self {
            provenance: data.provenance.measurement,
            samples: data.samples.iter().map(|s| s.y.clone()).collect(),
        }
    }
}

pub fn measurements_to_csv(m: &Measurements) -> String {
    let mut out = String::from("# uvlc-measurement v1\n");
    out.push_str(&provenance_line(&m.provenance));
    out.push_str("sample,pilot,frequency_hz,y\n");
    for (d, y) in m.samples.iter().enumerate() {
        for (i, v) in y.iter().enumerate() {
            let f = m.provenance.pilots.frequency(i + 1);
            writeln!(out, "{d},{},{f:e},{v:e}", i + 1).unwrap();
        }
    }
    out
}

pub fn save_measurements(path: impl AsRef<Path>, m: &Measurements) -> Result<()> {
    write_text(path, &measurements_to_csv(m))
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<Measurements> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (meta, rows) = split_preamble(&text);
    let provenance = parse_provenance(path, &meta)?;
    let p = provenance.pilots.pilots;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (line, row) in rows.iter().enumerate().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::parse(path, format!("line {line}: expected 4 columns")));
        }
        let d: usize = cols[0].trim().parse().map_err(|_| Error::parse(path, "bad sample index"))?;
        if d == samples.len() {
            samples.push(Vec::with_capacity(p));
        } else if d + 1 != samples.len() {
            return Err(Error::parse(path, format!("line {line}: samples out of order")));
        }
        samples[d].push(parse_f64(path, line, cols[3])?);
    }
    if let Some(d) = samples.iter().position(|s| s.len() != p) {
        return Err(Error::parse(path, format!("sample {d} does not have {p} pilots")));
    }
    Ok(Measurements {
        provenance,
        samples: samples.into_iter().map(DVector::from_vec).collect(),
    })
}

/// CSV with one row per grid cell and sample; `alpha` is filled for cells that
/// become reconstructed paths.
pub fn estimates_to_csv(
    scheme: &str,
    provenance: &MeasurementProvenance,
    estimates: &[DVector<f64>],
    threshold: f64,
) -> String {
    let mut out = String::from("# uvlc-estimate v1\n");
    writeln!(out, "# scheme={scheme}").unwrap();
    writeln!(out, "# path_threshold={threshold:e}").unwrap();
    out.push_str(&provenance_line(provenance));
    out.push_str("sample,k,distance_m,x_hat,alpha\n");
    let (grid, pilots, att) = (&provenance.distances, &provenance.pilots, &provenance.attenuation);
    for (d, x) in estimates.iter().enumerate() {
        let proxy = SparseProxy(x.clone());
        let paths = reconstruct_paths(&proxy, grid, pilots, att, threshold);
        let mut path_iter = paths.paths().iter().peekable();
        for (k, v) in x.iter().enumerate() {
            let distance = grid.distance(k);
            let alpha = match path_iter.peek() {
                Some(p) if p.distance == distance => {
                    let a = p.alpha;
                    path_iter.next();
                    format!("{a:e}")
                }
                _ => String::new(),
            };
            writeln!(out, "{d},{k},{distance:e},{v:e},{alpha}").unwrap();
        }
    }
    out
}

/// Parsed estimate file: per-sample `x_hat` and `(distance, alpha)` paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateFile {
    pub scheme: String,
    pub provenance: MeasurementProvenance,
    pub estimates: Vec<DVector<f64>>,
    pub paths: Vec<Vec<(f64, f64)>>,
}

pub fn load_estimates(path: impl AsRef<Path>) -> Result<EstimateFile> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (meta, rows) = split_preamble(&text);
    let provenance = parse_provenance(path, &meta)?;
    let scheme = meta_value(&meta, "scheme").unwrap_or_default().to_string();
    let mut estimates: Vec<Vec<f64>> = Vec::new();
    let mut paths: Vec<Vec<(f64, f64)>> = Vec::new();
    for (line, row) in rows.iter().enumerate().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, format!("line {line}: expected 5 columns")));
        }
        let d: usize = cols[0].trim().parse().map_err(|_| Error::parse(path, "bad sample index"))?;
        if d == estimates.len() {
            estimates.push(Vec::new());
            paths.push(Vec::new());
        }
        estimates[d].push(parse_f64(path, line, cols[3])?);
        if !cols[4].trim().is_empty() {
            paths[d].push((parse_f64(path, line, cols[2])?, parse_f64(path, line, cols[4])?));
        }
    }
    Ok(EstimateFile {
        scheme,
        provenance,
        estimates: estimates.into_iter().map(DVector::from_vec).collect(),
        paths,
    })
}

pub fn save_report(path: impl AsRef<Path>, report: &SweepReport) -> Result<()> {
    write_text(path, &report.to_csv())
}

pub fn training_log_to_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("layer,epoch,train_loss,test_loss,test_nmse\n");
    for r in log {
        writeln!(
            out,
            "{},{},{:.9e},{:.9e},{:.9e}",
            r.layer, r.epoch, r.train_loss, r.test_loss, r.test_nmse
        )
        .unwrap();
    }
    out
}

pub fn matrix_to_csv(phi: &ObservationMatrix) -> String {
    let mut out = String::from("# uvlc-observation-matrix v1\n");
    writeln!(out, "# rows={}", phi.rows()).unwrap();
    writeln!(out, "# cols={}", phi.cols()).unwrap();
    out.push_str(&provenance_line(phi.provenance()));
    for row in phi.matrix().row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Reads any dense matrix written one row per line; `#` lines are skipped.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (_, rows) = split_preamble(&text);
    let mut data = Vec::new();
    let mut cols = None;
    for (line, row) in rows.iter().enumerate() {
        let vals: Vec<f64> = row
            .split(',')
            .map(|s| parse_f64(path, line, s))
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::parse(path, format!("row {line} has {} entries, expected {c}", vals.len())))
            }
            _ => {}
        }
        data.extend(vals);
    }
    let cols = cols.ok_or_else(|| Error::parse(path, "empty matrix"))?;
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

pub fn trace_to_csv(trace: &LayerTrace) -> String {
    let mut out = String::from("iteration,sigma,v_norm,nnz\n");
    for (t, s) in trace.layers.iter().enumerate() {
        writeln!(out, "{},{:.9e},{:.9e},{}", t + 1, s.sigma, s.v.norm(), l0_norm(&s.x_hat)).unwrap();
    }
    out
}
