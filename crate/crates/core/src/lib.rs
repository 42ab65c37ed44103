//! Network informed restricted vector autoregression (NIRVAR).
//!
//! Panels of time series whose VAR(1) coefficient matrix is supported on a
//! latent block structure are estimated in three steps: a spectral embedding
//! of the sample covariance (or precision) matrix with Marčenko-Pastur rank
//! selection, Gaussian mixture clustering of the embedding, and least squares
//! restricted to within-cluster coefficients.

pub mod cluster;
pub mod dgp;
pub mod error;
pub mod evalbench;
pub mod graph;
pub mod linalg;
pub mod pipeline;
pub mod restricted_var;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{NirvarError, Result};
