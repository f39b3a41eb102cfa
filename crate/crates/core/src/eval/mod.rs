//! Datasets, the NMSE metric and the pilot/path sweeps.

mod dataset;
mod metrics;
mod sweep;

pub use dataset::{generate_dataset, Dataset, DatasetProvenance, DatasetSpec, Sample, Split};
pub use metrics::nmse;
pub use sweep::{
    run_scheme, sweep, sweep_paths, sweep_pilots, ReportRow, Scheme, SchemeSettings, SweepReport,
    SweepVariable,
};
