//! The FDVAE: inference network, conditional prior, decoders, auxiliary
//! predictors, loss assembly, training loop, and extraction of the learned
//! front-door representation.
//!
//! The encoder parameterises a diagonal-Gaussian posterior over the
//! representation given (X, Y); the conditional prior is a function of X
//! alone; decoders reconstruct X and Y from the representation. Two
//! auxiliary heads predict T and Y from X and are architecturally detached
//! from the encoder, so their losses send no gradient into the
//! representation.

use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, bernoulli_log_density, gaussian_log_density, kl_diag_gaussians, reparameterize,
    sigmoid, Activation, AdamHyper, AdamState, BoundMlp, Checkpoint, MlpParams, Tape, Tensor,
    TensorId,
};
use crate::synth::Dataset;
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LOG_VAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdvaeConfig {
    pub d_psi: usize,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_continuous")]
    pub x_kind: VarKind,
    #[serde(default = "default_continuous")]
    pub y_kind: VarKind,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_kl_weight")]
    pub kl_weight: f64,
    /// Patience (in epochs) for early stopping on a 10% validation split;
    /// disabled when absent.
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
    /// Keep the printed objective's auxiliary-term sign (which penalises
    /// auxiliary likelihoods under minimisation); off by default.
    #[serde(default)]
    pub literal_aux_signs: bool,
    /// Sample the posterior at inference instead of taking its mean.
    #[serde(default)]
    pub sample_at_inference: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_continuous() -> VarKind {
    VarKind::Continuous
}
fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    200
}
fn default_batch() -> usize {
    256
}
fn default_kl_weight() -> f64 {
    1.0
}

impl FdvaeConfig {
    pub fn new(d_psi: usize, seed: u64) -> Self {
        FdvaeConfig {
            d_psi,
            hidden_widths: default_hidden(),
            x_kind: VarKind::Continuous,
            y_kind: VarKind::Continuous,
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed,
            kl_weight: default_kl_weight(),
            early_stop_patience: None,
            literal_aux_signs: false,
            sample_at_inference: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_psi < 1 {
            return Err(Error::InvalidArgument("d_psi must be >= 1".into()));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-column affine normalisation applied to continuous inputs before the
/// networks see them. Identity for binary kinds.
#[derive(Debug, Clone)]
pub struct Normalization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Normalization {
    fn identity(d_x: usize) -> Self {
        Normalization {
            x_mean: vec![0.0; d_x],
            x_std: vec![1.0; d_x],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    fn x(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.x_mean[j]) / self.x_std[j]);
        }
        out
    }

    fn y(&self, y: &[f64]) -> Tensor {
        Array2::from_shape_fn((y.len(), 1), |(i, _)| (y[i] - self.y_mean) / self.y_std)
    }
}

#[derive(Debug, Clone)]
pub struct FdvaeModel {
    pub encoder: MlpParams,
    pub prior_net: MlpParams,
    pub decoder_x: MlpParams,
    pub decoder_y: MlpParams,
    pub aux_t: MlpParams,
    pub aux_y: MlpParams,
    pub config: FdvaeConfig,
    pub d_x: usize,
    pub norm: Normalization,
}

/// Per-epoch loss terms.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon_x: f64,
    pub recon_y: f64,
    pub kl: f64,
    pub aux_t: f64,
    pub aux_y: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_clock_seconds: f64,
    pub final_epoch: usize,
}

/// Training failure that still carries the progress made so far.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub report: TrainReport,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} epochs)", self.error, self.report.final_epoch)
    }
}

impl std::error::Error for TrainFailure {}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Error {
        f.error
    }
}

/// Breakdown of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: f64,
    pub recon_x: f64,
    pub recon_y: f64,
    pub kl: f64,
    pub aux_t: f64,
    pub aux_y: f64,
}

/// Deterministic fan-in-scaled initialisation from the config seed.
pub fn init(config: &FdvaeConfig, d_x: usize) -> Result<FdvaeModel> {
    config.validate()?;
    if d_x < 1 {
        return Err(Error::InvalidArgument("d_x must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x1217_5EED);
    let h = &config.hidden_widths;
    let chain = |inp: usize, out: usize| -> Vec<usize> {
        let mut v = vec![inp];
        v.extend_from_slice(h);
        v.push(out);
        v
    };
    let k = config.d_psi;
    let x_out = match config.x_kind {
        VarKind::Continuous => 2 * d_x,
        VarKind::Binary => d_x,
    };
    let y_out = match config.y_kind {
        VarKind::Continuous => 2,
        VarKind::Binary => 1,
    };
    let act = Activation::Elu;
    Ok(FdvaeModel {
        encoder: MlpParams::init(&chain(d_x + 1, 2 * k), act, &mut rng)?,
        prior_net: MlpParams::init(&chain(d_x, 2 * k), act, &mut rng)?,
        decoder_x: MlpParams::init(&chain(k, x_out), act, &mut rng)?,
        decoder_y: MlpParams::init(&chain(k, y_out), act, &mut rng)?,
        aux_t: MlpParams::init(&chain(d_x, 1), act, &mut rng)?,
        aux_y: MlpParams::init(&chain(d_x, y_out), act, &mut rng)?,
        config: config.clone(),
        d_x,
        norm: Normalization::identity(d_x),
    })
}

impl FdvaeModel {
    fn check_width(&self, x: &Tensor) -> Result<()> {
        if x.ncols() != self.d_x {
            return Err(Error::InvalidArgument(format!(
                "input width {} does not match model d_x {}",
                x.ncols(),
                self.d_x
            )));
        }
        Ok(())
    }

    /// Posterior parameters of q(psi | x, y): (mean, log variance), each
    /// `n x d_psi`.
    pub fn encode(&self, x: &Tensor, y: &[f64]) -> Result<(Tensor, Tensor)> {
        self.check_width(x)?;
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        let xn = self.norm.x(x);
        let yn = self.norm.y(y);
        let mut input = Array2::zeros((x.nrows(), self.d_x + 1));
        input.slice_mut(ndarray::s![.., ..self.d_x]).assign(&xn);
        input.slice_mut(ndarray::s![.., self.d_x..]).assign(&yn);
        let out = self.encoder.eval(&input)?;
        Ok(split_heads(&out, self.config.d_psi))
    }

    /// Conditional-prior parameters of p(psi | x); independent of y by
    /// construction.
    pub fn prior(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_width(x)?;
        let out = self.prior_net.eval(&self.norm.x(x))?;
        Ok(split_heads(&out, self.config.d_psi))
    }

    /// Distribution parameters of p(x | psi): (means, log variances) for
    /// continuous x, logits (and an empty log-variance matrix) for binary.
    pub fn decode_x(&self, psi: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let out = self.decoder_x.eval(psi)?;
        Ok(match self.config.x_kind {
            VarKind::Continuous => {
                let (mu, lv) = split_heads(&out, self.d_x);
                (mu, Some(lv))
            }
            VarKind::Binary => (out, None),
        })
    }

    /// Distribution parameters of p(y | psi), on the normalised y scale.
    pub fn decode_y(&self, psi: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let out = self.decoder_y.eval(psi)?;
        Ok(match self.config.y_kind {
            VarKind::Continuous => {
                let (mu, lv) = split_heads(&out, 1);
                (mu, Some(lv))
            }
            VarKind::Binary => (out, None),
        })
    }

    /// The learned representation, one row per observation. Posterior mean
    /// by default; a reparameterised sample when `sample_at_inference`.
    pub fn infer_psi(&self, dataset: &Dataset) -> Result<Tensor> {
        let (mu, log_var) = self.encode(&dataset.x, &dataset.y)?;
        if self.config.sample_at_inference {
            let mut rng = ChaCha12Rng::seed_from_u64(self.config.seed ^ 0x5A3F);
            let eps = Array2::from_shape_fn(mu.dim(), |_| rng.sample::<f64, _>(StandardNormal));
            Ok(&mu + &(log_var.mapv(|v| (0.5 * v).exp()) * eps))
        } else {
            Ok(mu)
        }
    }

    /// Auxiliary-head predictions: (P(T=1|x), E[Y|x] on the raw y scale).
    pub fn predict_aux(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_width(x)?;
        let xn = self.norm.x(x);
        let t_logits = self.aux_t.eval(&xn)?;
        let t_prob: Vec<f64> = t_logits.column(0).iter().map(|&l| sigmoid(l)).collect();
        let y_out = self.aux_y.eval(&xn)?;
        let y_est: Vec<f64> = match self.config.y_kind {
            VarKind::Continuous => y_out
                .column(0)
                .iter()
                .map(|&m| m * self.norm.y_std + self.norm.y_mean)
                .collect(),
            VarKind::Binary => y_out.column(0).iter().map(|&l| sigmoid(l)).collect(),
        };
        Ok((t_prob, y_est))
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.encoder,
            &self.prior_net,
            &self.decoder_x,
            &self.decoder_y,
            &self.aux_t,
            &self.aux_y,
        ]
        .iter()
        .all(|m| m.all_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new();
        cp.insert_mlp("encoder", &self.encoder);
        cp.insert_mlp("prior", &self.prior_net);
        cp.insert_mlp("decoder_x", &self.decoder_x);
        cp.insert_mlp("decoder_y", &self.decoder_y);
        cp.insert_mlp("aux_t", &self.aux_t);
        cp.insert_mlp("aux_y", &self.aux_y);
        let norm = ndarray::Array2::from_shape_vec(
            (1, 2 * self.d_x + 2),
            self.norm
                .x_mean
                .iter()
                .chain(self.norm.x_std.iter())
                .chain([self.norm.y_mean, self.norm.y_std].iter())
                .copied()
                .collect(),
        )
        .expect("norm shape");
        cp.params.insert(
            "norm.0.w".into(),
            crate::numerics::nn::ParamBlock {
                shape: norm.shape().to_vec(),
                data: norm.iter().copied().collect(),
            },
        );
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint, config: &FdvaeConfig, d_x: usize) -> Result<Self> {
        let act = Activation::Elu;
        let norm_block = cp
            .params
            .get("norm.0.w")
            .ok_or_else(|| Error::Data("checkpoint: missing normalisation block".into()))?;
        if norm_block.data.len() != 2 * d_x + 2 {
            return Err(Error::Data("checkpoint: normalisation block wrong size".into()));
        }
        let norm = Normalization {
            x_mean: norm_block.data[..d_x].to_vec(),
            x_std: norm_block.data[d_x..2 * d_x].to_vec(),
            y_mean: norm_block.data[2 * d_x],
            y_std: norm_block.data[2 * d_x + 1],
        };
        Ok(FdvaeModel {
            encoder: cp.extract_mlp("encoder", act)?,
            prior_net: cp.extract_mlp("prior", act)?,
            decoder_x: cp.extract_mlp("decoder_x", act)?,
            decoder_y: cp.extract_mlp("decoder_y", act)?,
            aux_t: cp.extract_mlp("aux_t", act)?,
            aux_y: cp.extract_mlp("aux_y", act)?,
            config: config.clone(),
            d_x,
            norm,
        })
    }
}

fn split_heads(out: &Tensor, k: usize) -> (Tensor, Tensor) {
    let mu = out.slice(ndarray::s![.., ..k]).to_owned();
    let lv = out
        .slice(ndarray::s![.., k..2 * k])
        .mapv(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP));
    (mu, lv)
}

struct BoundNets {
    enc: BoundMlp,
    prior: BoundMlp,
    dec_x: BoundMlp,
    dec_y: BoundMlp,
    aux_t: BoundMlp,
    aux_y: BoundMlp,
}

impl BoundNets {
    fn bind(model: &FdvaeModel, tape: &mut Tape) -> Self {
        BoundNets {
            enc: model.encoder.bind(tape),
            prior: model.prior_net.bind(tape),
            dec_x: model.decoder_x.bind(tape),
            dec_y: model.decoder_y.bind(tape),
            aux_t: model.aux_t.bind(tape),
            aux_y: model.aux_y.bind(tape),
        }
    }

    fn param_ids(&self) -> Vec<TensorId> {
        [&self.enc, &self.prior, &self.dec_x, &self.dec_y, &self.aux_t, &self.aux_y]
            .iter()
            .flat_map(|b| b.param_ids())
            .collect()
    }
}

struct LossIds {
    total: TensorId,
    recon_x: TensorId,
    recon_y: TensorId,
    kl: TensorId,
    aux_t: TensorId,
    aux_y: TensorId,
}

/// Build the full loss graph for one (already normalised) batch.
#[allow(clippy::too_many_arguments)]
fn build_loss(
    tape: &mut Tape,
    nets: &BoundNets,
    model: &FdvaeModel,
    x_norm: &Tensor,
    y_norm: &Tensor,
    t_batch: &Tensor,
    eps: &Tensor,
) -> Result<LossIds> {
    let b = x_norm.nrows() as f64;
    let k = model.config.d_psi;

    let x_id = tape.leaf(x_norm.clone());
    let y_id = tape.leaf(y_norm.clone());
    let enc_in = tape.concat_cols(&[x_id, y_id])?;
    let enc_out = nets.enc.forward(tape, enc_in)?;
    let mu_q = tape.slice_cols(enc_out, 0, k)?;
    let lv_q_raw = tape.slice_cols(enc_out, k, 2 * k)?;
    let lv_q = tape.clamp(lv_q_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);

    let prior_out = nets.prior.forward(tape, x_id)?;
    let mu_p = tape.slice_cols(prior_out, 0, k)?;
    let lv_p_raw = tape.slice_cols(prior_out, k, 2 * k)?;
    let lv_p = tape.clamp(lv_p_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);

    let psi = reparameterize(tape, mu_q, lv_q, eps)?;

    // reconstruction of x
    let dec_x_out = nets.dec_x.forward(tape, psi)?;
    let ll_x = match model.config.x_kind {
        VarKind::Continuous => {
            let mu_x = tape.slice_cols(dec_x_out, 0, model.d_x)?;
            let lv_x_raw = tape.slice_cols(dec_x_out, model.d_x, 2 * model.d_x)?;
            let lv_x = tape.clamp(lv_x_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);
            gaussian_log_density(tape, x_norm, mu_x, lv_x)?
        }
        VarKind::Binary => bernoulli_log_density(tape, x_norm, dec_x_out)?,
    };

    // reconstruction of y
    let dec_y_out = nets.dec_y.forward(tape, psi)?;
    let ll_y = match model.config.y_kind {
        VarKind::Continuous => {
            let mu_y = tape.slice_cols(dec_y_out, 0, 1)?;
            let lv_y_raw = tape.slice_cols(dec_y_out, 1, 2)?;
            let lv_y = tape.clamp(lv_y_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);
            gaussian_log_density(tape, y_norm, mu_y, lv_y)?
        }
        VarKind::Binary => bernoulli_log_density(tape, y_norm, dec_y_out)?,
    };

    let kl_elem = kl_diag_gaussians(tape, mu_q, lv_q, mu_p, lv_p)?;

    // auxiliary heads: functions of x only
    let t_logits = nets.aux_t.forward(tape, x_id)?;
    let ll_t = bernoulli_log_density(tape, t_batch, t_logits)?;
    let aux_y_out = nets.aux_y.forward(tape, x_id)?;
    let ll_ay = match model.config.y_kind {
        VarKind::Continuous => {
            let mu = tape.slice_cols(aux_y_out, 0, 1)?;
            let lv_raw = tape.slice_cols(aux_y_out, 1, 2)?;
            let lv = tape.clamp(lv_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);
            gaussian_log_density(tape, y_norm, mu, lv)?
        }
        VarKind::Binary => bernoulli_log_density(tape, y_norm, aux_y_out)?,
    };

    // batch means of each term
    let mean_of = |tape: &mut Tape, id: TensorId| -> TensorId {
        let s = tape.sum_all(id);
        tape.scale(s, 1.0 / b)
    };
    let recon_x = mean_of(tape, ll_x);
    let recon_y = mean_of(tape, ll_y);
    let kl = mean_of(tape, kl_elem);
    let aux_t_ll = mean_of(tape, ll_t);
    let aux_y_ll = mean_of(tape, ll_ay);

    let recon = tape.add(recon_x, recon_y)?;
    let neg_recon = tape.scale(recon, -1.0);
    let kl_w = tape.scale(kl, model.config.kl_weight);
    let elbo_loss = tape.add(neg_recon, kl_w)?;
    let aux_sum = tape.add(aux_t_ll, aux_y_ll)?;
    // default: add negative log-likelihoods so minimisation fits the heads;
    // the literal printed sign is kept behind a flag for ablation.
    let aux_sign = if model.config.literal_aux_signs { 1.0 } else { -1.0 };
    let aux_term = tape.scale(aux_sum, aux_sign);
    let total = tape.add(elbo_loss, aux_term)?;

    Ok(LossIds {
        total,
        recon_x,
        recon_y,
        kl,
        aux_t: aux_t_ll,
        aux_y: aux_y_ll,
    })
}

/// Evaluate the loss terms on one batch without updating parameters.
/// `eps` rows must match the batch; pass zeros for a deterministic
/// posterior-mean evaluation.
pub fn loss(model: &FdvaeModel, dataset: &Dataset, rows: &[usize], eps: &Tensor) -> Result<LossTerms> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("batch must be nonempty".into()));
    }
    let (x_norm, y_norm, t_batch) = gather_batch(model, dataset, rows);
    let mut tape = Tape::new();
    let nets = BoundNets::bind(model, &mut tape);
    let ids = build_loss(&mut tape, &nets, model, &x_norm, &y_norm, &t_batch, eps)?;
    Ok(read_terms(&tape, &ids))
}

/// Loss terms plus the gradient of the total loss with respect to every
/// parameter block. Blocks are ordered encoder, prior, decoder_x,
/// decoder_y, aux_t, aux_y, with (weight, bias) per layer — the same order
/// as each net's `blocks_mut`.
pub fn loss_with_gradients(
    model: &FdvaeModel,
    dataset: &Dataset,
    rows: &[usize],
    eps: &Tensor,
) -> Result<(LossTerms, Vec<Tensor>)> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("batch must be nonempty".into()));
    }
    let (x_norm, y_norm, t_batch) = gather_batch(model, dataset, rows);
    let mut tape = Tape::new();
    let nets = BoundNets::bind(model, &mut tape);
    let ids = build_loss(&mut tape, &nets, model, &x_norm, &y_norm, &t_batch, eps)?;
    let grads = tape.backward(ids.total)?;
    let blocks = nets
        .param_ids()
        .iter()
        .map(|&id| grads.wrt(id).clone())
        .collect();
    Ok((read_terms(&tape, &ids), blocks))
}

fn read_terms(tape: &Tape, ids: &LossIds) -> LossTerms {
    LossTerms {
        total: tape.value(ids.total)[(0, 0)],
        recon_x: tape.value(ids.recon_x)[(0, 0)],
        recon_y: tape.value(ids.recon_y)[(0, 0)],
        kl: tape.value(ids.kl)[(0, 0)],
        aux_t: tape.value(ids.aux_t)[(0, 0)],
        aux_y: tape.value(ids.aux_y)[(0, 0)],
    }
}

fn gather_batch(
    model: &FdvaeModel,
    dataset: &Dataset,
    rows: &[usize],
) -> (Tensor, Tensor, Tensor) {
    let xb = Array2::from_shape_fn((rows.len(), model.d_x), |(r, c)| dataset.x[(rows[r], c)]);
    let yb: Vec<f64> = rows.iter().map(|&i| dataset.y[i]).collect();
    let tb = Array2::from_shape_fn((rows.len(), 1), |(r, _)| dataset.t[rows[r]]);
    (model.norm.x(&xb), model.norm.y(&yb), tb)
}

/// Minibatch Adam on the FDVAE loss. Deterministic given (dataset, config).
pub fn train(
    dataset: &Dataset,
    config: &FdvaeConfig,
) -> std::result::Result<(FdvaeModel, TrainReport), TrainFailure> {
    let start = std::time::Instant::now();
    let mut report = TrainReport::default();
    let fail = |error: Error, report: TrainReport| TrainFailure { error, report };

    let setup = || -> Result<(FdvaeModel, Vec<usize>, Vec<usize>)> {
        config.validate()?;
        dataset.validate()?;
        let n = dataset.n();
        if n < 2 * config.batch_size {
            return Err(Error::InvalidArgument(format!(
                "training needs at least 2*batch_size = {} rows, dataset has {n}",
                2 * config.batch_size
            )));
        }
        let mut model = init(config, dataset.d_x())?;
        if config.x_kind == VarKind::Continuous {
            for j in 0..model.d_x {
                let col = dataset.x.column(j);
                let mean = col.mean().unwrap_or(0.0);
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                model.norm.x_mean[j] = mean;
                model.norm.x_std[j] = var.sqrt().max(1e-12);
            }
        }
        if config.y_kind == VarKind::Continuous {
            let mean = dataset.y.iter().sum::<f64>() / n as f64;
            let var = dataset.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            model.norm.y_mean = mean;
            model.norm.y_std = var.sqrt().max(1e-12);
        }

        // deterministic validation split: last 10% when early stopping
        let split = if config.early_stop_patience.is_some() {
            n - n / 10
        } else {
            n
        };
        Ok((model, (0..split).collect(), (split..n).collect()))
    };

    let (mut model, mut train_rows, val_rows) =
        setup().map_err(|e| fail(e, std::mem::take(&mut report)))?;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x7EA1_A17E);
    let shapes: Vec<(usize, usize)> = {
        let mut m = model.clone();
        [
            &mut m.encoder,
            &mut m.prior_net,
            &mut m.decoder_x,
            &mut m.decoder_y,
            &mut m.aux_t,
            &mut m.aux_y,
        ]
        .into_iter()
        .flat_map(|net| net.blocks_mut().into_iter().map(|b| b.dim()).collect::<Vec<_>>())
        .collect()
    };
    let mut adam = AdamState::new(&shapes, AdamHyper::with_lr(config.learning_rate));

    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        // Fisher-Yates over the training rows
        for i in (1..train_rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            train_rows.swap(i, j);
        }

        let mut sums = [0.0f64; 6];
        let mut batches = 0usize;
        for chunk in train_rows.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let (x_norm, y_norm, t_batch) = gather_batch(&model, dataset, chunk);
            let eps = Array2::from_shape_fn((chunk.len(), config.d_psi), |_| {
                rng.sample::<f64, _>(StandardNormal)
            });

            let mut tape = Tape::new();
            let nets = BoundNets::bind(&model, &mut tape);
            let ids = build_loss(&mut tape, &nets, &model, &x_norm, &y_norm, &t_batch, &eps)
                .map_err(|e| fail(e, report.clone()))?;
            let terms = read_terms(&tape, &ids);
            if !terms.total.is_finite() {
                let name = offending_term(&terms);
                return Err(fail(
                    Error::TrainingDivergence(format!(
                        "non-finite loss at epoch {epoch} (term: {name})"
                    )),
                    report,
                ));
            }
            let grads = tape.backward(ids.total).map_err(|e| fail(e, report.clone()))?;
            let ids_flat = nets.param_ids();
            let grad_arrays: Vec<Array2<f64>> =
                ids_flat.iter().map(|&id| grads.wrt(id).clone()).collect();

            let mut blocks: Vec<&mut Array2<f64>> = Vec::new();
            for net in [
                &mut model.encoder,
                &mut model.prior_net,
                &mut model.decoder_x,
                &mut model.decoder_y,
                &mut model.aux_t,
                &mut model.aux_y,
            ] {
                blocks.extend(net.blocks_mut());
            }
            let labels = block_labels();
            let label_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            adam_step(&mut blocks, &grad_arrays, &mut adam, &label_refs)
                .map_err(|e| fail(e, report.clone()))?;

            sums[0] += terms.total;
            sums[1] += terms.recon_x;
            sums[2] += terms.recon_y;
            sums[3] += terms.kl;
            sums[4] += terms.aux_t;
            sums[5] += terms.aux_y;
            batches += 1;
        }

        let inv = 1.0 / batches.max(1) as f64;
        let validation_loss = if val_rows.is_empty() {
            None
        } else {
            let eps = Array2::zeros((val_rows.len(), config.d_psi));
            Some(
                loss(&model, dataset, &val_rows, &eps)
                    .map_err(|e| fail(e, report.clone()))?
                    .total,
            )
        };
        report.epochs.push(EpochStats {
            epoch,
            loss: sums[0] * inv,
            recon_x: sums[1] * inv,
            recon_y: sums[2] * inv,
            kl: sums[3] * inv,
            aux_t: sums[4] * inv,
            aux_y: sums[5] * inv,
            validation_loss,
        });
        report.final_epoch = epoch + 1;

        if let (Some(patience), Some(v)) = (config.early_stop_patience, validation_loss) {
            if v < best_val - 1e-9 {
                best_val = v;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }

    if !model.all_finite() {
        return Err(fail(
            Error::TrainingDivergence("non-finite parameters after training".into()),
            report,
        ));
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}

fn offending_term(t: &LossTerms) -> &'static str {
    if !t.recon_x.is_finite() {
        "recon_x"
    } else if !t.recon_y.is_finite() {
        "recon_y"
    } else if !t.kl.is_finite() {
        "kl"
    } else if !t.aux_t.is_finite() {
        "aux_t"
    } else if !t.aux_y.is_finite() {
        "aux_y"
    } else {
        "total"
    }
}

fn block_labels() -> Vec<String> {
    // labels mirror the block order used during updates; layer counts vary,
    // so only the net name is precise
    let nets = ["encoder", "prior", "decoder_x", "decoder_y", "aux_t", "aux_y"];
    let mut out = Vec::new();
    for n in nets {
        for k in 0..8 {
            out.push(format!("{n}.{k}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Setting, SynthConfig};

    fn small_dataset(n: usize, seed: u64) -> Dataset {
        generate(&SynthConfig::new(Setting::A, n, seed)).unwrap()
    }

    fn small_config(seed: u64) -> FdvaeConfig {
        let mut c = FdvaeConfig::new(1, seed);
        c.hidden_widths = vec![16, 16];
        c.epochs = 3;
        c.batch_size = 64;
        c
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = FdvaeConfig::new(2, 11);
        let a = init(&cfg, 8).unwrap();
        let b = init(&cfg, 8).unwrap();
        assert_eq!(a.encoder.layers[0].0, b.encoder.layers[0].0);
        assert_eq!(a.aux_y.layers[1].0, b.aux_y.layers[1].0);
    }

    #[test]
    fn architecture_widths() {
        let cfg = FdvaeConfig::new(1, 0);
        let m = init(&cfg, 8).unwrap();
        assert_eq!(m.encoder.input_dim(), 9);
        assert_eq!(m.encoder.output_dim(), 2);
        assert_eq!(m.prior_net.input_dim(), 8);
        assert_eq!(m.decoder_x.output_dim(), 16);
        assert_eq!(m.decoder_y.output_dim(), 2);
        assert_eq!(m.aux_t.output_dim(), 1);
    }

    #[test]
    fn initial_loss_is_finite() {
        let ds = small_dataset(200, 1);
        let cfg = small_config(5);
        let m = init(&cfg, ds.d_x()).unwrap();
        let rows: Vec<usize> = (0..64).collect();
        let eps = Array2::zeros((64, 1));
        let terms = loss(&m, &ds, &rows, &eps).unwrap();
        assert!(terms.total.is_finite());
        assert!(terms.kl >= 0.0);
    }

    #[test]
    fn encode_batch_consistency() {
        let ds = small_dataset(50, 2);
        let cfg = small_config(3);
        let m = init(&cfg, ds.d_x()).unwrap();
        let (mu_all, lv_all) = m.encode(&ds.x, &ds.y).unwrap();
        let x_row = ds.x.slice(ndarray::s![5..6, ..]).to_owned();
        let (mu_one, lv_one) = m.encode(&x_row, &ds.y[5..6]).unwrap();
        assert!((mu_all[(5, 0)] - mu_one[(0, 0)]).abs() < 1e-12);
        assert!((lv_all[(5, 0)] - lv_one[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn encode_is_stable_for_large_inputs() {
        let cfg = small_config(3);
        let m = init(&cfg, 4).unwrap();
        let x = Array2::from_elem((2, 4), 50.0);
        let (mu, lv) = m.encode(&x, &[50.0, -50.0]).unwrap();
        assert!(mu.iter().chain(lv.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn prior_ignores_y() {
        let ds = small_dataset(20, 9);
        let cfg = small_config(1);
        let m = init(&cfg, ds.d_x()).unwrap();
        let (p1, _) = m.prior(&ds.x).unwrap();
        let (p2, _) = m.prior(&ds.x).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn width_mismatch_rejected() {
        let cfg = small_config(1);
        let m = init(&cfg, 8).unwrap();
        assert!(m.prior(&Array2::zeros((3, 5))).is_err());
        assert!(m.encode(&Array2::zeros((3, 8)), &[0.0; 2]).is_err());
    }

    #[test]
    fn kl_zero_when_posterior_equals_prior() {
        // force identical encoder and prior outputs by zeroing final layers
        let cfg = small_config(4);
        let ds = small_dataset(100, 7);
        let mut m = init(&cfg, ds.d_x()).unwrap();
        for net in [&mut m.encoder, &mut m.prior_net] {
            let last = net.layers.len() - 1;
            net.layers[last].0.fill(0.0);
            net.layers[last].1.fill(0.0);
        }
        let rows: Vec<usize> = (0..32).collect();
        let eps = Array2::zeros((32, 1));
        let terms = loss(&m, &ds, &rows, &eps).unwrap();
        assert!(terms.kl.abs() < 1e-12);
    }

    #[test]
    fn aux_terms_decompose_additively() {
        let ds = small_dataset(100, 3);
        let cfg = small_config(8);
        let m = init(&cfg, ds.d_x()).unwrap();
        let rows: Vec<usize> = (0..40).collect();
        let eps = Array2::zeros((40, 1));
        let t = loss(&m, &ds, &rows, &eps).unwrap();
        let elbo_part = -(t.recon_x + t.recon_y) + m.config.kl_weight * t.kl;
        assert!((t.total - (elbo_part - t.aux_t - t.aux_y)).abs() < 1e-10);

        let mut literal = m.clone();
        literal.config.literal_aux_signs = true;
        let tl = loss(&literal, &ds, &rows, &eps).unwrap();
        assert!((tl.total - (elbo_part + tl.aux_t + tl.aux_y)).abs() < 1e-10);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let ds = small_dataset(600, 17);
        let mut cfg = small_config(21);
        cfg.epochs = 10;
        let (m1, r1) = train(&ds, &cfg).unwrap();
        let (m2, r2) = train(&ds, &cfg).unwrap();
        assert_eq!(m1.encoder.layers[0].0, m2.encoder.layers[0].0);
        assert_eq!(m1.decoder_y.layers[1].0, m2.decoder_y.layers[1].0);
        assert_eq!(r1.epochs.len(), r2.epochs.len());
        assert!(
            r1.epochs.last().unwrap().loss < r1.epochs[0].loss,
            "loss did not decrease: {} -> {}",
            r1.epochs[0].loss,
            r1.epochs.last().unwrap().loss
        );
        // KL after training is finite and below its initial value is not
        // guaranteed in 10 epochs, but it must be finite and nonnegative
        assert!(r1.epochs.iter().all(|e| e.kl.is_finite() && e.kl >= -1e-9));
    }

    #[test]
    fn train_rejects_tiny_dataset() {
        let ds = small_dataset(50, 1);
        let cfg = small_config(1);
        let err = train(&ds, &cfg).unwrap_err();
        assert!(matches!(err.error, Error::InvalidArgument(_)));
    }

    #[test]
    fn infer_psi_shape_and_determinism() {
        let ds = small_dataset(600, 23);
        let mut cfg = small_config(2);
        cfg.epochs = 2;
        let (m, _) = train(&ds, &cfg).unwrap();
        let a = m.infer_psi(&ds).unwrap();
        let b = m.infer_psi(&ds).unwrap();
        assert_eq!(a.dim(), (600, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn predict_aux_probabilities() {
        let ds = small_dataset(600, 29);
        let mut cfg = small_config(6);
        cfg.epochs = 5;
        let (m, _) = train(&ds, &cfg).unwrap();
        let (t_prob, y_est) = m.predict_aux(&ds.x).unwrap();
        assert!(t_prob.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(y_est.iter().all(|v| v.is_finite()));

        // beats base-rate log loss on the training data
        let base = ds.t.iter().sum::<f64>() / ds.n() as f64;
        let ll = |p: f64, t: f64| t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        let model_ll: f64 = t_prob.iter().zip(&ds.t).map(|(&p, &t)| ll(p, t)).sum();
        let base_ll: f64 = ds.t.iter().map(|&t| ll(base, t)).sum();
        assert!(model_ll > base_ll, "aux {model_ll} vs base {base_ll}");
    }

    #[test]
    fn aux_heads_send_no_gradient_into_encoder() {
        let ds = small_dataset(100, 31);
        let cfg = small_config(10);
        let m = init(&cfg, ds.d_x()).unwrap();
        let rows: Vec<usize> = (0..16).collect();
        let (x_norm, y_norm, t_batch) = gather_batch(&m, &ds, &rows);
        let eps = Array2::zeros((16, 1));
        let mut tape = Tape::new();
        let nets = BoundNets::bind(&m, &mut tape);
        let ids = build_loss(&mut tape, &nets, &m, &x_norm, &y_norm, &t_batch, &eps).unwrap();
        let aux_total = tape.add(ids.aux_t, ids.aux_y).unwrap();
        let grads = tape.backward(aux_total).unwrap();
        for id in nets.enc.param_ids() {
            assert!(grads.wrt(id).iter().all(|&g| g == 0.0));
        }
    }

    /// Finite-difference check of the complete loss on a 16-row batch.
    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let ds = small_dataset(64, 37);
        let mut cfg = small_config(13);
        cfg.hidden_widths = vec![6, 6];
        let m = init(&cfg, ds.d_x()).unwrap();
        let rows: Vec<usize> = (0..16).collect();
        let eps_mat = Array2::from_shape_fn((16, 1), |(i, _)| ((i as f64) * 0.7).sin());

        let (x_norm, y_norm, t_batch) = gather_batch(&m, &ds, &rows);
        let mut tape = Tape::new();
        let nets = BoundNets::bind(&m, &mut tape);
        let ids = build_loss(&mut tape, &nets, &m, &x_norm, &y_norm, &t_batch, &eps_mat).unwrap();
        let grads = tape.backward(ids.total).unwrap();
        let param_ids = nets.param_ids();

        let loss_of = |model: &FdvaeModel| -> f64 {
            let mut tape = Tape::new();
            let nets = BoundNets::bind(model, &mut tape);
            let ids =
                build_loss(&mut tape, &nets, model, &x_norm, &y_norm, &t_batch, &eps_mat).unwrap();
            tape.value(ids.total)[(0, 0)]
        };

        let h = 1e-4;
        let mut block = 0usize;
        let mut worst = 0.0f64;
        for net_idx in 0..6 {
            let layer_count = match net_idx {
                0 => m.encoder.layers.len(),
                1 => m.prior_net.layers.len(),
                2 => m.decoder_x.layers.len(),
                3 => m.decoder_y.layers.len(),
                4 => m.aux_t.layers.len(),
                _ => m.aux_y.layers.len(),
            };
            for _ in 0..2 * layer_count {
                // probe a few entries per block
                let dim = {
                    let mut probe = m.clone();
                    all_blocks(&mut probe)[block].dim()
                };
                let probes = [(0, 0), (dim.0 / 2, dim.1 / 2), (dim.0 - 1, dim.1 - 1)];
                for &(r, c) in &probes {
                    let mut plus = m.clone();
                    all_blocks(&mut plus)[block][(r, c)] += h;
                    let mut minus = m.clone();
                    all_blocks(&mut minus)[block][(r, c)] -= h;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let an = grads.wrt(param_ids[block])[(r, c)];
                    let denom = an.abs().max(1e-6);
                    worst = worst.max(((fd - an) / denom).abs());
                }
                block += 1;
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    fn all_blocks(m: &mut FdvaeModel) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for net in [
            &mut m.encoder,
            &mut m.prior_net,
            &mut m.decoder_x,
            &mut m.decoder_y,
            &mut m.aux_t,
            &mut m.aux_y,
        ] {
            out.extend(net.blocks_mut());
        }
        out
    }

    #[test]
    fn checkpoint_roundtrip_preserves_inference() {
        let ds = small_dataset(600, 41);
        let mut cfg = small_config(14);
        cfg.epochs = 2;
        let (m, _) = train(&ds, &cfg).unwrap();
        let cp = m.to_checkpoint();
        let back = FdvaeModel::from_checkpoint(&cp, &cfg, ds.d_x()).unwrap();
        assert_eq!(m.infer_psi(&ds).unwrap(), back.infer_psi(&ds).unwrap());
    }
}
