//! Loss-landscape sampling for single-hidden-layer sigmoid networks.
//!
//! * [`nn`]: forward pass, SSE/CE losses, gradients, Hessians, curvature classes
//! * [`sampler`]: progressive gradient walks
//! * [`basin`]: stagnation-based basin of attraction estimates (`n_stag`, `l_stag`)
//! * [`datasets`]: benchmark problems, ingestion, standardisation and splitting
//! * [`experiment`]: run orchestration, loss-gradient clouds and summary tables
//! * [`plot`]: SVG scatter plots of loss-gradient clouds

pub mod basin;
pub mod datasets;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
