//! Adam with bias correction.

use crate::error::{Error, Result};
use ndarray::Array2;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamHyper { learning_rate, ..Default::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators mirroring one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], hyper: AdamHyper) -> Self {
        AdamState {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            step: 0,
            hyper,
        }
    }

    pub fn for_params(params: &[&mut Array2<f64>], hyper: AdamHyper) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.dim()).collect();
        Self::new(&shapes, hyper)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a group of parameter blocks. `labels` names blocks
/// in divergence errors; pass an empty slice to fall back to indices.
pub fn adam_step(
    params: &mut [&mut Array2<f64>],
    grads: &[Array2<f64>],
    state: &mut AdamState,
    labels: &[&str],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adam_step: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            let name = labels.get(i).copied().unwrap_or("<unnamed>");
            return Err(Error::TrainingDivergence(format!(
                "non-finite gradient in parameter block {i} ('{name}')"
            )));
        }
        if g.dim() != params[i].dim() {
            return Err(Error::InvalidArgument(format!(
                "adam_step: block {i} shape mismatch {:?} vs {:?}",
                params[i].dim(),
                g.dim()
            )));
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powf(t);
    let bc2 = 1.0 - h.beta2.powf(t);
    for i in 0..grads.len() {
        let g = &grads[i];
        state.m[i] = &state.m[i] * h.beta1 + &(g * (1.0 - h.beta1));
        state.v[i] = &state.v[i] * h.beta2 + &(g.mapv(|x| x * x) * (1.0 - h.beta2));
        let m_hat = &state.m[i] / bc1;
        let v_hat = &state.v[i] / bc2;
        let update = m_hat / (v_hat.mapv(f64::sqrt) + h.epsilon);
        *params[i] = &*params[i] - &(update * h.learning_rate);
    }
    Ok(())
}
