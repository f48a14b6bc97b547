//! Minimal dense-tensor engine with reverse-mode autodiff, probability
//! primitives, Adam, and statistical utilities.

pub mod adam;
pub mod nn;
pub mod stats;
pub mod tape;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use nn::{BoundMlp, Checkpoint, MlpParams};
pub use stats::{linear_regression, pcc, residualize, spearman, LinearFit};
pub use tape::{
    bernoulli_log_density, gaussian_log_density, kl_diag_gaussians, reparameterize, sigmoid,
    softplus, Activation, Gradients, Tape, Tensor, TensorId,
};
