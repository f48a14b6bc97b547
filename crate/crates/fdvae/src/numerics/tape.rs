//! Dense 2-D tensors with reverse-mode gradient recording.
//!
//! A [`Tape`] is an arena of operation nodes. Values are `n x k` row-major
//! matrices (`ndarray::Array2<f64>`); batch dimension first, scalars are
//! `1 x 1`. The backward pass visits nodes in reverse execution order, so
//! every node is touched exactly once.

use crate::error::{Error, Result};
use ndarray::{Array2, Axis};

/// Dense row-major real matrix. Rows are batch entries.
pub type Tensor = Array2<f64>;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// x (n x k) plus a row vector (1 x k) broadcast over rows.
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Exp(usize),
    Square(usize),
    Act(usize, Activation),
    Clamp(usize, f64, f64),
    Softplus(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize, usize),
    SumAll(usize),
    /// Elementwise product with a constant (non-differentiated) matrix.
    MulData(usize, Array2<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::InvalidArgument(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node { value, op });
        TensorId(self.nodes.len() - 1)
    }

    /// Record an input value (parameter or data).
    pub fn leaf(&mut self, value: Tensor) -> TensorId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.leaf(Array2::from_elem((1, 1), v))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.ncols() != bv.nrows() {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let value = av.dot(bv);
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn add_row(&mut self, x: TensorId, b: TensorId) -> Result<TensorId> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(shape_err("add_row", xv.shape(), bv.shape()));
        }
        let value = xv + &bv.row(0);
        Ok(self.push(value, Op::AddRow(x.0, b.0)))
    }

    fn binary(&mut self, op: &str, a: TensorId, b: TensorId) -> Result<(Tensor, Tensor)> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av.shape(), bv.shape()));
        }
        Ok((av.clone(), bv.clone()))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = self.binary("add", a, b)?;
        Ok(self.push(av + bv, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = self.binary("sub", a, b)?;
        Ok(self.push(av - bv, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = self.binary("mul", a, b)?;
        Ok(self.push(av * bv, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        let value = &self.nodes[x.0].value * c;
        self.push(value, Op::Scale(x.0, c))
    }

    pub fn add_const(&mut self, x: TensorId, c: f64) -> TensorId {
        let value = &self.nodes[x.0].value + c;
        self.push(value, Op::AddConst(x.0))
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        let value = self.nodes[x.0].value.mapv(f64::exp);
        self.push(value, Op::Exp(x.0))
    }

    pub fn square(&mut self, x: TensorId) -> TensorId {
        let value = self.nodes[x.0].value.mapv(|v| v * v);
        self.push(value, Op::Square(x.0))
    }

    pub fn activation(&mut self, x: TensorId, act: Activation) -> TensorId {
        let value = self.nodes[x.0].value.mapv(|v| apply_activation(v, act));
        self.push(value, Op::Act(x.0, act))
    }

    pub fn clamp(&mut self, x: TensorId, lo: f64, hi: f64) -> TensorId {
        let value = self.nodes[x.0].value.mapv(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(x.0, lo, hi))
    }

    pub fn softplus(&mut self, x: TensorId) -> TensorId {
        let value = self.nodes[x.0].value.mapv(softplus);
        self.push(value, Op::Softplus(x.0))
    }

    pub fn concat_cols(&mut self, xs: &[TensorId]) -> Result<TensorId> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let rows = self.nodes[xs[0].0].value.nrows();
        let mut cols = 0;
        for &x in xs {
            let v = &self.nodes[x.0].value;
            if v.nrows() != rows {
                return Err(shape_err("concat_cols", &[rows], v.shape()));
            }
            cols += v.ncols();
        }
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &x in xs {
            let v = &self.nodes[x.0].value;
            value
                .slice_mut(ndarray::s![.., at..at + v.ncols()])
                .assign(v);
            at += v.ncols();
        }
        Ok(self.push(value, Op::ConcatCols(xs.iter().map(|x| x.0).collect())))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let v = &self.nodes[x.0].value;
        if end > v.ncols() || start >= end {
            return Err(Error::InvalidArgument(format!(
                "slice_cols {start}..{end} out of bounds for {:?}",
                v.shape()
            )));
        }
        let value = v.slice(ndarray::s![.., start..end]).to_owned();
        Ok(self.push(value, Op::SliceCols(x.0, start, end)))
    }

    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let value = Array2::from_elem((1, 1), self.nodes[x.0].value.sum());
        self.push(value, Op::SumAll(x.0))
    }

    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let n = self.nodes[x.0].value.len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    pub fn mul_data(&mut self, x: TensorId, data: &Tensor) -> Result<TensorId> {
        let v = &self.nodes[x.0].value;
        if v.shape() != data.shape() {
            return Err(shape_err("mul_data", v.shape(), data.shape()));
        }
        let value = v * data;
        Ok(self.push(value, Op::MulData(x.0, data.clone())))
    }

    /// Affine map `x W + b` with `b` a `1 x k` row vector.
    pub fn affine(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Reverse-mode gradients of a scalar output with respect to every node.
    pub fn backward(&self, output: TensorId) -> Result<Gradients> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward output must be scalar, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.dim()))
            .collect();
        grads[output.0][(0, 0)] = 1.0;

        for i in (0..=output.0).rev() {
            let g = grads[i].clone();
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    grads[*a] = &grads[*a] + &g.dot(&bv.t());
                    grads[*b] = &grads[*b] + &av.t().dot(&g);
                }
                Op::AddRow(x, b) => {
                    grads[*x] = &grads[*x] + &g;
                    let col_sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[*b] = &grads[*b] + &col_sum;
                }
                Op::Add(a, b) => {
                    grads[*a] = &grads[*a] + &g;
                    grads[*b] = &grads[*b] + &g;
                }
                Op::Sub(a, b) => {
                    grads[*a] = &grads[*a] + &g;
                    grads[*b] = &grads[*b] - &g;
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    grads[*a] = &grads[*a] + &(&g * bv);
                    grads[*b] = &grads[*b] + &(&g * av);
                }
                Op::Scale(x, c) => {
                    grads[*x] = &grads[*x] + &(&g * *c);
                }
                Op::AddConst(x) => {
                    grads[*x] = &grads[*x] + &g;
                }
                Op::Exp(x) => {
                    grads[*x] = &grads[*x] + &(&g * &self.nodes[i].value);
                }
                Op::Square(x) => {
                    grads[*x] = &grads[*x] + &(&g * &(&self.nodes[*x].value * 2.0));
                }
                Op::Act(x, act) => {
                    let d = derivative_from(&self.nodes[*x].value, &self.nodes[i].value, *act);
                    grads[*x] = &grads[*x] + &(&g * &d);
                }
                Op::Clamp(x, lo, hi) => {
                    let mask = self.nodes[*x]
                        .value
                        .mapv(|v| if v > *lo && v < *hi { 1.0 } else { 0.0 });
                    grads[*x] = &grads[*x] + &(&g * &mask);
                }
                Op::Softplus(x) => {
                    let d = self.nodes[*x].value.mapv(sigmoid);
                    grads[*x] = &grads[*x] + &(&g * &d);
                }
                Op::ConcatCols(xs) => {
                    let mut at = 0;
                    for &x in xs {
                        let w = self.nodes[x].value.ncols();
                        let piece = g.slice(ndarray::s![.., at..at + w]).to_owned();
                        grads[x] = &grads[x] + &piece;
                        at += w;
                    }
                }
                Op::SliceCols(x, start, end) => {
                    let mut gx = grads[*x].clone();
                    {
                        let mut region = gx.slice_mut(ndarray::s![.., *start..*end]);
                        region += &g;
                    }
                    grads[*x] = gx;
                }
                Op::SumAll(x) => {
                    let gv = g[(0, 0)];
                    grads[*x] = &grads[*x] + gv;
                }
                Op::MulData(x, data) => {
                    grads[*x] = &grads[*x] + &(&g * data);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn wrt(&self, id: TensorId) -> &Tensor {
        &self.grads[id.0]
    }
}

fn apply_activation(v: f64, act: Activation) -> f64 {
    match act {
        Activation::Elu => {
            if v > 0.0 {
                v
            } else {
                v.exp() - 1.0
            }
        }
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => sigmoid(v),
        Activation::Tanh => v.tanh(),
        Activation::Linear => v,
    }
}

fn derivative_from(input: &Tensor, output: &Tensor, act: Activation) -> Tensor {
    match act {
        Activation::Elu => input.mapv(|v| if v > 0.0 { 1.0 } else { v.exp() }),
        Activation::Relu => input.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        Activation::Sigmoid => output.mapv(|s| s * (1.0 - s)),
        Activation::Tanh => output.mapv(|t| 1.0 - t * t),
        Activation::Linear => Array2::ones(input.dim()),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(1 + exp(x)).
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub const LN_2PI: f64 = 1.8378770664093453;

/// Elementwise log density of a diagonal Gaussian with `x` held constant.
pub fn gaussian_log_density(
    tape: &mut Tape,
    x: &Tensor,
    mu: TensorId,
    log_var: TensorId,
) -> Result<TensorId> {
    let xv = tape.leaf(x.clone());
    let diff = tape.sub(xv, mu)?;
    let sq = tape.square(diff);
    let neg_lv = tape.scale(log_var, -1.0);
    let inv_var = tape.exp(neg_lv);
    let mahal = tape.mul(sq, inv_var)?;
    let sum = tape.add(log_var, mahal)?;
    let shifted = tape.add_const(sum, LN_2PI);
    Ok(tape.scale(shifted, -0.5))
}

/// Elementwise Bernoulli log likelihood for `x` in {0, 1} given logits.
/// Computed through softplus, so logits of magnitude up to hundreds stay
/// finite.
pub fn bernoulli_log_density(tape: &mut Tape, x: &Tensor, logits: TensorId) -> Result<TensorId> {
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(
            "bernoulli_log_density: x entries must be 0 or 1".into(),
        ));
    }
    // log p = -(x * softplus(-l) + (1-x) * softplus(l))
    let neg_l = tape.scale(logits, -1.0);
    let sp_neg = tape.softplus(neg_l);
    let sp_pos = tape.softplus(logits);
    let a = tape.mul_data(sp_neg, x)?;
    let ones_minus = x.mapv(|v| 1.0 - v);
    let b = tape.mul_data(sp_pos, &ones_minus)?;
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, -1.0))
}

/// Per-dimension KL divergence between diagonal Gaussians q and p.
pub fn kl_diag_gaussians(
    tape: &mut Tape,
    mu_q: TensorId,
    log_var_q: TensorId,
    mu_p: TensorId,
    log_var_p: TensorId,
) -> Result<TensorId> {
    let var_q = tape.exp(log_var_q);
    let dmu = tape.sub(mu_q, mu_p)?;
    let dmu2 = tape.square(dmu);
    let num = tape.add(var_q, dmu2)?;
    let neg_lvp = tape.scale(log_var_p, -1.0);
    let inv_var_p = tape.exp(neg_lvp);
    let ratio = tape.mul(num, inv_var_p)?;
    let dlv = tape.sub(log_var_p, log_var_q)?;
    let s = tape.add(dlv, ratio)?;
    let shifted = tape.add_const(s, -1.0);
    Ok(tape.scale(shifted, 0.5))
}

/// mu + exp(0.5 log_var) * eps with `eps` supplied by the caller's RNG.
pub fn reparameterize(
    tape: &mut Tape,
    mu: TensorId,
    log_var: TensorId,
    eps: &Tensor,
) -> Result<TensorId> {
    let half_lv = tape.scale(log_var, 0.5);
    let std = tape.exp(half_lv);
    let noise = tape.mul_data(std, eps)?;
    tape.add(mu, noise)
}
