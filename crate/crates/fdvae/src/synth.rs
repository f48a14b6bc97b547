//! Seeded generation of synthetic datasets.
//!
//! Two topologies are supported. In Setting A the proxies carry the
//! mediator signal (X measures W1, W2 and Z_FD); in Setting B they do not
//! (X measures W1 and W2 only). The structural mechanism is linear with a
//! logistic treatment link, so the ground-truth ATE has the closed form
//! sum_j b_j c_j over the mediator components.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
}

/// Distributions for the structural coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    /// Logit coefficients of (W1, W2, U) on the treatment.
    pub a: [f64; 3],
    /// Range of the per-component treatment-to-mediator coefficient b_j.
    pub b_range: (f64, f64),
    /// Range of the per-component mediator-to-outcome coefficient c_j.
    pub c_range: (f64, f64),
    /// W2 -> Y coefficient.
    pub d: f64,
    /// Base U -> Y coefficient, multiplied by `u_scale` at generation time.
    pub e: f64,
    /// Magnitude range of proxy loadings on mediator components (sign is
    /// drawn at random per column).
    pub m_z_range: (f64, f64),
    /// Magnitude range of proxy loadings on W1/W2 (sign drawn at random).
    /// Kept below the mediator loadings so mediator structure dominates
    /// the proxy covariance.
    pub m_w_range: (f64, f64),
    /// Relative spread of per-column mediator loading directions around the
    /// shared readout direction. Mediator proxies measure a common weighted
    /// combination of the components (plus this jitter); fully independent
    /// per-component proxies would make a one-dimensional representation
    /// unable to cover a multi-component mediator.
    #[serde(default = "default_m_z_jitter")]
    pub m_z_jitter: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec {
            a: [1.0, 1.0, 1.0],
            b_range: (0.5, 1.5),
            c_range: (0.25, 0.75),
            d: 1.0,
            e: 1.0,
            m_z_range: (1.0, 2.0),
            m_w_range: (0.3, 0.6),
            m_z_jitter: 0.1,
        }
    }
}

fn default_m_z_jitter() -> f64 {
    0.1
}

/// Per-node noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub z_std: f64,
    pub y_std: f64,
    pub x_std: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        // x_std is deliberately not tiny: with a near-zero proxy noise
        // floor, a low-dimensional representation is rewarded for
        // reconstructing one mediator component exactly instead of the
        // treatment-weighted combination that estimation needs.
        NoiseSpec { z_std: 0.5, y_std: 0.5, x_std: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub setting: Setting,
    pub n: usize,
    pub d_zfd: usize,
    pub d_x: usize,
    pub u_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SynthConfig {
    pub fn new(setting: Setting, n: usize, seed: u64) -> Self {
        SynthConfig {
            setting,
            n,
            d_zfd: 1,
            d_x: 8,
            u_scale: 1.0,
            seed,
            coefficients: CoefficientSpec::default(),
            noise: NoiseSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if self.d_zfd < 1 {
            return Err(Error::InvalidArgument("d_zfd must be >= 1".into()));
        }
        if self.d_x < 1 {
            return Err(Error::InvalidArgument("d_x must be >= 1".into()));
        }
        match self.setting {
            Setting::A if self.d_x < 4 => {
                return Err(Error::InvalidArgument(format!(
                    "setting A needs d_x >= 4 (two mediator proxies plus one per \
                     confounder); got d_x = {}",
                    self.d_x
                )));
            }
            Setting::B if self.d_x < 2 => {
                return Err(Error::InvalidArgument(
                    "setting B needs d_x >= 2 (one proxy per confounder)".into(),
                ));
            }
            _ => {}
        }
        if self.u_scale < 0.0 {
            return Err(Error::InvalidArgument("u_scale must be nonnegative".into()));
        }
        let ns = self.noise;
        if ns.z_std <= 0.0 || ns.y_std <= 0.0 || ns.x_std <= 0.0 {
            return Err(Error::InvalidArgument("noise stds must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients drawn for one dataset; deterministic in the config seed.
#[derive(Debug, Clone)]
pub struct DrawnCoefficients {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Proxy loading matrix, d_x rows; columns are (W1, W2, Z_1..Z_k) in
    /// Setting A and (W1, W2) in Setting B.
    pub m: Array2<f64>,
}

pub fn draw_coefficients(cfg: &SynthConfig) -> Result<DrawnCoefficients> {
    cfg.validate()?;
    // A dedicated stream keeps coefficient draws independent of n.
    let mut rng = ChaCha12Rng::seed_from_u64(mix(cfg.seed, 0xC0EF));
    let ub = Uniform::new_inclusive(cfg.coefficients.b_range.0, cfg.coefficients.b_range.1);
    let uc = Uniform::new_inclusive(cfg.coefficients.c_range.0, cfg.coefficients.c_range.1);
    let b: Vec<f64> = (0..cfg.d_zfd).map(|_| ub.sample(&mut rng)).collect();
    let c: Vec<f64> = (0..cfg.d_zfd).map(|_| uc.sample(&mut rng)).collect();

    let uw = Uniform::new_inclusive(cfg.coefficients.m_w_range.0, cfg.coefficients.m_w_range.1);
    let uz = Uniform::new_inclusive(cfg.coefficients.m_z_range.0, cfg.coefficients.m_z_range.1);
    let signed = |rng: &mut ChaCha12Rng, u: &Uniform<f64>| {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        sign * u.sample(rng)
    };

    // Proxy structure (Setting A): the confounders each get a dedicated
    // low-loading column, and every mediator proxy column measures a shared
    // weighted combination of the mediator components (the treatment
    // pathway direction) with a small per-column directional jitter.
    // Proxies that instead read individual components independently would
    // leave a one-dimensional representation covering only one component
    // of a multi-component mediator, which no estimator downstream could
    // repair.
    let m = match cfg.setting {
        Setting::A => {
            let k = cfg.d_zfd;
            let z_cols = cfg.d_x - 2;
            let mut m = Array2::zeros((cfg.d_x, 2 + k));
            m[(cfg.d_x - 2, 0)] = signed(&mut rng, &uw);
            m[(cfg.d_x - 1, 1)] = signed(&mut rng, &uw);
            let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let jitter = cfg.coefficients.m_z_jitter / (k as f64).sqrt();
            for col in 0..z_cols {
                let s = signed(&mut rng, &uz);
                let mut dir: Vec<f64> = b.iter().map(|&bj| bj / bnorm).collect();
                for d in dir.iter_mut() {
                    *d += jitter * rng.sample::<f64, _>(StandardNormal);
                }
                let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (j, d) in dir.iter().enumerate() {
                    m[(col, 2 + j)] = s * d / dn;
                }
            }
            m
        }
        Setting::B => {
            let mut m = Array2::zeros((cfg.d_x, 2));
            for col in 0..cfg.d_x {
                m[(col, col % 2)] = signed(&mut rng, &uz);
            }
            m
        }
    };
    Ok(DrawnCoefficients { b, c, m })
}

/// Hidden ground-truth columns kept for evaluation only.
#[derive(Debug, Clone)]
pub struct Hidden {
    pub z_fd: Array2<f64>,
    pub u: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic(SynthConfig),
    File {
        path: String,
        /// (mean, std) of the outcome before standardization, when applied.
        outcome_scale: Option<(f64, f64)>,
        standardized_proxies: bool,
    },
}

/// N observations of (X, T, Y) plus optional hidden ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Tensor,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub hidden: Option<Hidden>,
    pub true_ate: Option<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.x.nrows() != n || self.y.len() != n {
            return Err(Error::InvalidArgument("dataset arrays must share n".into()));
        }
        if self.t.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("treatment entries must be 0 or 1".into()));
        }
        let finite = self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("dataset contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Ancestral sampling over the linear SCM; a pure function of the config.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let coef = draw_coefficients(cfg)?;
    let mut rng = ChaCha12Rng::seed_from_u64(mix(cfg.seed, 0xDA7A));
    let n = cfg.n;
    let k = cfg.d_zfd;
    let a = cfg.coefficients.a;
    let normal = StandardNormal;

    let mut x = Array2::zeros((n, cfg.d_x));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z_fd = Array2::zeros((n, k));
    let (mut u_col, mut w1_col, mut w2_col) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));

    for i in 0..n {
        let w1: f64 = normal.sample(&mut rng);
        let w2: f64 = normal.sample(&mut rng);
        let u: f64 = normal.sample(&mut rng);
        let p = sigmoid(a[0] * w1 + a[1] * w2 + a[2] * u);
        let ti = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        let mut y_i = cfg.coefficients.d * w2 + cfg.u_scale * cfg.coefficients.e * u;
        for j in 0..k {
            let z = coef.b[j] * ti + cfg.noise.z_std * rng.sample::<f64, _>(normal);
            z_fd[(i, j)] = z;
            y_i += coef.c[j] * z;
        }
        y_i += cfg.noise.y_std * rng.sample::<f64, _>(normal);

        for r in 0..cfg.d_x {
            let mut v = coef.m[(r, 0)] * w1 + coef.m[(r, 1)] * w2;
            if cfg.setting == Setting::A {
                for j in 0..k {
                    v += coef.m[(r, 2 + j)] * z_fd[(i, j)];
                }
            }
            v += cfg.noise.x_std * rng.sample::<f64, _>(normal);
            x[(i, r)] = v;
        }

        t.push(ti);
        y.push(y_i);
        u_col.push(u);
        w1_col.push(w1);
        w2_col.push(w2);
    }

    let ds = Dataset {
        x,
        t,
        y,
        hidden: Some(Hidden { z_fd, u: u_col, w1: w1_col, w2: w2_col }),
        true_ate: Some(true_ate(cfg)?),
        provenance: Provenance::Synthetic(*cfg),
    };
    ds.validate()?;
    Ok(ds)
}

/// Analytic ATE: the only directed T -> Y paths run through the mediator
/// components, so the effect is sum_j b_j c_j.
pub fn true_ate(cfg: &SynthConfig) -> Result<f64> {
    let coef = draw_coefficients(cfg)?;
    Ok(coef.b.iter().zip(&coef.c).map(|(b, c)| b * c).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SampleSize,
    UScale,
    DZfd,
}

/// One config per (value, replication) pair, with replication seeds derived
/// from the base seed by a splitmix-style hash of (axis, value, index).
pub fn sweep_configs(
    base: &SynthConfig,
    axis: SweepAxis,
    values: &[f64],
    replications: usize,
) -> Result<Vec<SynthConfig>> {
    base.validate()?;
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep values must be nonempty".into()));
    }
    if replications < 1 {
        return Err(Error::InvalidArgument("replications must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(values.len() * replications);
    for &value in values {
        let mut cfg = *base;
        match axis {
            SweepAxis::SampleSize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "sample size {value} is not a positive integer"
                    )));
                }
                cfg.n = value as usize;
            }
            SweepAxis::UScale => {
                if value < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "u_scale {value} must be nonnegative"
                    )));
                }
                cfg.u_scale = value;
            }
            SweepAxis::DZfd => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "d_zfd {value} is not a positive integer"
                    )));
                }
                cfg.d_zfd = value as usize;
            }
        }
        for rep in 0..replications {
            let mut c = cfg;
            c.seed = replication_seed(base.seed, axis, value, rep);
            out.push(c);
        }
    }
    Ok(out)
}

pub fn replication_seed(base_seed: u64, axis: SweepAxis, value: f64, rep: usize) -> u64 {
    let axis_tag = match axis {
        SweepAxis::SampleSize => 1u64,
        SweepAxis::UScale => 2,
        SweepAxis::DZfd => 3,
    };
    let mut s = mix(base_seed, axis_tag);
    s = mix(s, value.to_bits());
    mix(s, rep as u64)
}

/// splitmix64 finalizer over a combined word.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

// ── dataset files ────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    true_ate: Option<f64>,
    provenance: Provenance,
}

/// Write `<stem>.csv` plus a `<stem>.json` sidecar with provenance and the
/// true ATE. Header: `x0..x{D-1},t,y[,zfd0..,u,w1,w2]`.
pub fn write_dataset(ds: &Dataset, stem: &Path) -> Result<()> {
    let csv_path = stem.with_extension("csv");
    let mut wtr = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;

    let mut header: Vec<String> = (0..ds.d_x()).map(|j| format!("x{j}")).collect();
    header.push("t".into());
    header.push("y".into());
    if let Some(h) = &ds.hidden {
        header.extend((0..h.z_fd.ncols()).map(|j| format!("zfd{j}")));
        header.extend(["u".into(), "w1".into(), "w2".into()]);
    }
    wtr.write_record(&header)
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;

    for i in 0..ds.n() {
        let mut row: Vec<String> = ds.x.row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{:?}", ds.t[i]));
        row.push(format!("{:?}", ds.y[i]));
        if let Some(h) = &ds.hidden {
            row.extend(h.z_fd.row(i).iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", h.u[i]));
            row.push(format!("{:?}", h.w1[i]));
            row.push(format!("{:?}", h.w2[i]));
        }
        wtr.write_record(&row)
            .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
    }
    wtr.flush().map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let side = Sidecar { true_ate: ds.true_ate, provenance: ds.provenance.clone() };
    let json_path = stem.with_extension("json");
    let s = serde_json::to_string_pretty(&side).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json_path, s).map_err(|e| Error::io(json_path.display().to_string(), e))
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(stem: &Path) -> Result<Dataset> {
    let csv_path = stem.with_extension("csv");
    let mut rdr = csv::Reader::from_path(&csv_path)
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let d_x = header.iter().take_while(|h| h.starts_with('x')).count();
    let d_z = header.iter().filter(|h| h.starts_with("zfd")).count();
    let has_hidden = d_z > 0;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
        let row: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(ci, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: non-numeric cell at row {}, column {} ('{}')",
                        csv_path.display(),
                        ri + 2,
                        header[ci],
                        cell
                    ))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }

    let n = rows.len();
    let mut x = Array2::zeros((n, d_x));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z_fd = Array2::zeros((n, d_z));
    let (mut u, mut w1, mut w2) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rows.iter().enumerate() {
        for j in 0..d_x {
            x[(i, j)] = row[j];
        }
        t.push(row[d_x]);
        y.push(row[d_x + 1]);
        if has_hidden {
            for j in 0..d_z {
                z_fd[(i, j)] = row[d_x + 2 + j];
            }
            u.push(row[d_x + 2 + d_z]);
            w1.push(row[d_x + 3 + d_z]);
            w2.push(row[d_x + 4 + d_z]);
        }
    }

    let json_path = stem.with_extension("json");
    let side: Sidecar = {
        let s = std::fs::read_to_string(&json_path)
            .map_err(|e| Error::io(json_path.display().to_string(), e))?;
        serde_json::from_str(&s).map_err(|e| Error::Data(format!("{}: {e}", json_path.display())))?
    };

    let ds = Dataset {
        x,
        t,
        y,
        hidden: has_hidden.then_some(Hidden { z_fd, u, w1, w2 }),
        true_ate: side.true_ate,
        provenance: side.provenance,
    };
    ds.validate()?;
    Ok(ds)
}
