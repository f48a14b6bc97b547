//! Multi-layer perceptron parameters and checkpoint serialization.

use super::tape::{Activation, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Weights and biases of a feed-forward network. Hidden layers share one
/// activation tag; the output layer is linear.
#[derive(Debug, Clone)]
pub struct MlpParams {
    /// (weight `in x out`, bias `1 x out`) per layer.
    pub layers: Vec<(Array2<f64>, Array2<f64>)>,
    pub activation: Activation,
}

impl MlpParams {
    /// Fan-in-scaled Gaussian initialization over the dimension chain
    /// `dims[0] -> dims[1] -> ... -> dims.last()`.
    pub fn init<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "mlp needs at least input and output dims".into(),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let std = (1.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("valid std");
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
            let b = Array2::zeros((1, fan_out));
            layers.push((w, b));
        }
        Ok(MlpParams { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().0.ncols()
    }

    /// Register the parameters on a tape so gradients can be read back.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let ids = self
            .layers
            .iter()
            .map(|(w, b)| (tape.leaf(w.clone()), tape.leaf(b.clone())))
            .collect();
        BoundMlp { ids, activation: self.activation }
    }

    /// Forward pass without gradient bookkeeping overhead concerns; handy
    /// for inference. Input is `n x input_dim`.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.ncols() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "mlp eval: input width {} does not match expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone());
        let bound = self.bind(&mut tape);
        let out = bound.forward(&mut tape, xid)?;
        Ok(tape.value(out).clone())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// All parameter blocks in a stable order, for optimizer updates.
    pub fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }
}

/// Tape-bound view of an MLP's parameters.
pub struct BoundMlp {
    ids: Vec<(TensorId, TensorId)>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let mut h = x;
        let last = self.ids.len() - 1;
        for (k, &(w, b)) in self.ids.iter().enumerate() {
            h = tape.affine(h, w, b)?;
            if k < last {
                h = tape.activation(h, self.activation);
            }
        }
        Ok(h)
    }

    /// Parameter tensor ids in the same order as [`MlpParams::blocks_mut`].
    pub fn param_ids(&self) -> Vec<TensorId> {
        self.ids.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

// ── checkpoint format ────────────────────────────────────────────────

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: BTreeMap<String, ParamBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamBlock {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, params: BTreeMap::new() }
    }

    pub fn insert_mlp(&mut self, name: &str, mlp: &MlpParams) {
        for (k, (w, b)) in mlp.layers.iter().enumerate() {
            self.params.insert(
                format!("{name}.{k}.w"),
                ParamBlock {
                    shape: w.shape().to_vec(),
                    data: w.iter().copied().collect(),
                },
            );
            self.params.insert(
                format!("{name}.{k}.b"),
                ParamBlock {
                    shape: b.shape().to_vec(),
                    data: b.iter().copied().collect(),
                },
            );
        }
    }

    pub fn extract_mlp(&self, name: &str, activation: Activation) -> Result<MlpParams> {
        let mut layers = Vec::new();
        for k in 0.. {
            let (wk, bk) = (format!("{name}.{k}.w"), format!("{name}.{k}.b"));
            match (self.params.get(&wk), self.params.get(&bk)) {
                (Some(w), Some(b)) => {
                    layers.push((block_to_array(w, &wk)?, block_to_array(b, &bk)?))
                }
                (None, None) => break,
                _ => return Err(Error::Data(format!("checkpoint: partial layer {name}.{k}"))),
            }
        }
        if layers.is_empty() {
            return Err(Error::Data(format!("checkpoint: no layers under '{name}'")));
        }
        Ok(MlpParams { layers, activation })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let s = serde_json::to_string(self).map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
        std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cp: Checkpoint =
            serde_json::from_str(&s).map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        Ok(cp)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

fn block_to_array(block: &ParamBlock, name: &str) -> Result<Array2<f64>> {
    if block.shape.len() != 2 || block.shape[0] * block.shape[1] != block.data.len() {
        return Err(Error::Data(format!("checkpoint: malformed block '{name}'")));
    }
    Array2::from_shape_vec((block.shape[0], block.shape[1]), block.data.clone())
        .map_err(|e| Error::Data(format!("checkpoint '{name}': {e}")))
}
