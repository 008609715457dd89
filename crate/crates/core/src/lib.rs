//! Reconstruction of MIMO channel matrices from reduced pilot observations
//! with Gaussian process regression over the antenna grid, together with the
//! LS/MMSE full-pilot baselines and the evaluation metrics used to compare
//! them.

pub mod baselines;
pub mod channel_models;
pub mod error;
pub mod gpr;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod pilot_probing;
pub mod rng;
pub mod spatial_correlation;

pub use error::{Error, Result};
