//! Sparse channel estimation for underwater visible-light links.
//!
//! A multipath optical channel is represented as a sparse vector over a grid
//! of propagation distances. Pilot measurements of its frequency response
//! are a linear, highly coherent projection of that vector. The crate
//! provides the channel and measurement models, classic estimators (ridge
//! LS, OMP, AMP), a layer-wise trained unfolded-AMP network, and sweep
//! tooling that compares them by NMSE.

pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod lamp;
pub mod sensing;
pub mod solvers;

pub use error::{Error, Result};
