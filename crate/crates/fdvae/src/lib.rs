//! Learning a front-door adjustment-set representation from proxy
//! variables with a variational autoencoder, and using it to estimate
//! average treatment effects under unobserved confounding and mediation.
//!
//! The crate splits into:
//! - [`graph`]: exact DAG machinery (d-separation, back-door/front-door
//!   criteria and adjustments) used as oracles;
//! - [`numerics`]: tensors, reverse-mode autodiff, Adam, statistics;
//! - [`synth`]: seeded synthetic data generation with analytic ground truth;
//! - [`model`]: the FDVAE itself;
//! - [`estimators`]: plug-in ATE estimation and metrics;
//! - [`exp`]: experiment orchestration, real-data ingestion, results files.

pub mod error;
pub mod estimators;
pub mod exp;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
