//! Experiment orchestration: sweep execution with deterministic
//! replication seeds, real-dataset ingestion, and results persistence
//! (results.csv, summary.json, plot-ready CSVs).

use crate::error::{Error, Result};
use crate::estimators::{
    ate_backdoor_regression, ate_frontdoor_plugin, naive_diff_means,
};
use crate::model::{train, FdvaeConfig};
use crate::numerics::{pcc, Tensor};
use crate::synth::{
    generate, sweep_configs, Dataset, Provenance, SweepAxis, SynthConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Estimation pipelines an experiment can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    FdvaeFrontdoor,
    BackdoorRegression,
    Naive,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::FdvaeFrontdoor => "fdvae_frontdoor",
            MethodName::BackdoorRegression => "backdoor_regression",
            MethodName::Naive => "naive",
        }
    }
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_replications() -> usize {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub base: SynthConfig,
    pub model: FdvaeConfig,
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        self.base.validate()?;
        self.model.validate()?;
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One method evaluation on one replication. Wall-clock time is kept for
/// reporting but never written to results.csv, which must be byte-identical
/// across runs and thread counts.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub setting: String,
    pub axis: String,
    pub axis_value: f64,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub ate_hat: Option<f64>,
    pub ate_true: Option<f64>,
    /// |(ate_hat - ate_true) / ate_true| * 100.
    pub bias_pct: Option<f64>,
    pub pcc_psi_zfd: Option<f64>,
    pub wall_clock_seconds: f64,
    pub error: Option<String>,
}

pub fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::SampleSize => "sample_size",
        SweepAxis::UScale => "u_scale",
        SweepAxis::DZfd => "d_zfd",
    }
}

fn setting_name(cfg: &SynthConfig) -> &'static str {
    match cfg.setting {
        crate::synth::Setting::A => "A",
        crate::synth::Setting::B => "B",
    }
}

fn bias_pct(hat: f64, truth: Option<f64>) -> Option<f64> {
    match truth {
        Some(t) if t != 0.0 => Some(((hat - t) / t).abs() * 100.0),
        _ => None,
    }
}

/// Largest absolute Pearson correlation between any representation column
/// and any true mediator column.
fn psi_alignment(psi: &Tensor, z_fd: &Tensor) -> Option<f64> {
    let mut best: Option<f64> = None;
    for pc in 0..psi.ncols() {
        let p: Vec<f64> = psi.column(pc).to_vec();
        for zc in 0..z_fd.ncols() {
            let z: Vec<f64> = z_fd.column(zc).to_vec();
            if let Ok(r) = pcc(&p, &z) {
                let r = r.abs();
                if best.map_or(true, |b| r > b) {
                    best = Some(r);
                }
            }
        }
    }
    best
}

fn run_method(
    spec: &ExperimentSpec,
    cfg: &SynthConfig,
    dataset: &Dataset,
    method: MethodName,
    axis_value: f64,
    replication: usize,
) -> ResultRow {
    let start = std::time::Instant::now();
    let mut row = ResultRow {
        experiment: spec.name.clone(),
        setting: setting_name(cfg).to_string(),
        axis: axis_name(spec.axis).to_string(),
        axis_value,
        replication,
        seed: cfg.seed,
        method: method.as_str().to_string(),
        ate_hat: None,
        ate_true: dataset.true_ate,
        bias_pct: None,
        pcc_psi_zfd: None,
        wall_clock_seconds: 0.0,
        error: None,
    };
    let outcome: Result<()> = (|| {
        match method {
            MethodName::FdvaeFrontdoor => {
                let mut mcfg = spec.model.clone();
                // derive the training seed from the replication seed so
                // replications differ but remain reproducible
                mcfg.seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x11AE;
                let (model, _report) = train(dataset, &mcfg).map_err(|f| f.error)?;
                let psi = model.infer_psi(dataset)?;
                let est = ate_frontdoor_plugin(&psi, &dataset.t, &dataset.y)?;
                row.ate_hat = Some(est.value);
                if let Some(h) = dataset.hidden.as_ref() {
                    row.pcc_psi_zfd = psi_alignment(&psi, &h.z_fd);
                }
            }
            MethodName::BackdoorRegression => {
                let est = ate_backdoor_regression(&dataset.x, &dataset.t, &dataset.y)?;
                row.ate_hat = Some(est.value);
            }
            MethodName::Naive => {
                let est = naive_diff_means(&dataset.t, &dataset.y)?;
                row.ate_hat = Some(est.value);
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => row.bias_pct = row.ate_hat.and_then(|h| bias_pct(h, row.ate_true)),
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_clock_seconds = start.elapsed().as_secs_f64();
    row
}

/// Execute the sweep. Replications run concurrently; the returned rows are
/// sorted by (axis value, replication, method) so output is independent of
/// scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let configs = sweep_configs(&spec.base, spec.axis, &spec.values, spec.replications)?;
    let tasks: Vec<(usize, f64, SynthConfig)> = configs
        .into_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let value = spec.values[i / spec.replications];
            (i % spec.replications, value, cfg)
        })
        .collect();

    let mut rows: Vec<ResultRow> = tasks
        .par_iter()
        .flat_map_iter(|(rep, value, cfg)| {
            let methods = &spec.methods;
            match generate(cfg) {
                Ok(dataset) => methods
                    .iter()
                    .map(|&m| run_method(spec, cfg, &dataset, m, *value, *rep))
                    .collect::<Vec<_>>(),
                Err(e) => methods
                    .iter()
                    .map(|&m| ResultRow {
                        experiment: spec.name.clone(),
                        setting: setting_name(cfg).to_string(),
                        axis: axis_name(spec.axis).to_string(),
                        axis_value: *value,
                        replication: *rep,
                        seed: cfg.seed,
                        method: m.as_str().to_string(),
                        ate_hat: None,
                        ate_true: None,
                        bias_pct: None,
                        pcc_psi_zfd: None,
                        wall_clock_seconds: 0.0,
                        error: Some(e.to_string()),
                    })
                    .collect(),
            }
        })
        .collect();

    rows.sort_by(|a, b| {
        a.axis_value
            .partial_cmp(&b.axis_value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.replication.cmp(&b.replication))
            .then(a.method.cmp(&b.method))
    });
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub const RESULTS_COLUMNS: [&str; 12] = [
    "experiment",
    "setting",
    "axis",
    "axis_value",
    "replication",
    "seed",
    "method",
    "ate_hat",
    "ate_true",
    "bias_pct",
    "pcc_psi_zfd",
    "error",
];

/// Aggregate statistics for one (method, axis value) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryCell {
    pub n: usize,
    pub n_errors: usize,
    pub mean_bias_pct: Option<f64>,
    pub std_bias_pct: Option<f64>,
    pub mean_pcc: Option<f64>,
    pub std_pcc: Option<f64>,
}

pub type Summary = BTreeMap<String, BTreeMap<String, SummaryCell>>;

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        Some(
            (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt(),
        )
    } else {
        Some(0.0)
    };
    (Some(mean), std)
}

/// Axis values as map keys; `{:?}` keeps distinct floats distinct.
fn value_key(v: f64) -> String {
    format!("{v:?}")
}

pub fn summarize(rows: &[ResultRow]) -> Summary {
    let mut grouped: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.method.clone(), value_key(row.axis_value)))
            .or_default()
            .push(row);
    }
    let mut out: Summary = BTreeMap::new();
    for ((method, value), group) in grouped {
        let biases: Vec<f64> = group.iter().filter_map(|r| r.bias_pct).collect();
        let pccs: Vec<f64> = group.iter().filter_map(|r| r.pcc_psi_zfd).collect();
        let (mb, sb) = mean_std(&biases);
        let (mp, sp) = mean_std(&pccs);
        out.entry(method).or_default().insert(
            value,
            SummaryCell {
                n: group.len(),
                n_errors: group.iter().filter(|r| r.error.is_some()).count(),
                mean_bias_pct: mb,
                std_bias_pct: sb,
                mean_pcc: mp,
                std_pcc: sp,
            },
        );
    }
    out
}

/// Write results.csv, summary.json and plotdata/<method>.csv under `dir`.
pub fn emit_results(rows: &[ResultRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let results_path = dir.join("results.csv");
    let mut out = String::new();
    out.push_str(&RESULTS_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let fields = [
            r.experiment.clone(),
            r.setting.clone(),
            r.axis.clone(),
            format!("{:?}", r.axis_value),
            r.replication.to_string(),
            r.seed.to_string(),
            r.method.clone(),
            fmt_opt(r.ate_hat),
            fmt_opt(r.ate_true),
            fmt_opt(r.bias_pct),
            fmt_opt(r.pcc_psi_zfd),
            r.error
                .as_deref()
                .map(|e| format!("\"{}\"", e.replace('"', "'")))
                .unwrap_or_default(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(&results_path, out)
        .map_err(|e| Error::io(results_path.display().to_string(), e))?;

    let summary = summarize(rows);
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Data(format!("summary serialization: {e}")))?;
    std::fs::write(&summary_path, text)
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;

    let plotdir = dir.join("plotdata");
    std::fs::create_dir_all(&plotdir).map_err(|e| Error::io(plotdir.display().to_string(), e))?;
    for (method, cells) in &summary {
        let path = plotdir.join(format!("{method}.csv"));
        let mut f = std::fs::File::create(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        writeln!(f, "axis_value,n,n_errors,mean_bias_pct,std_bias_pct,mean_pcc,std_pcc")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        // rows ordered by numeric axis value, not string key
        let mut ordered: Vec<(&String, &SummaryCell)> = cells.iter().collect();
        ordered.sort_by(|a, b| {
            let fa: f64 = a.0.parse().unwrap_or(f64::NAN);
            let fb: f64 = b.0.parse().unwrap_or(f64::NAN);
            fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal)
        });
        for (value, cell) in ordered {
            writeln!(
                f,
                "{value},{},{},{},{},{},{}",
                cell.n,
                cell.n_errors,
                fmt_opt(cell.mean_bias_pct),
                fmt_opt(cell.std_bias_pct),
                fmt_opt(cell.mean_pcc),
                fmt_opt(cell.std_pcc),
            )
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Description of a real-world CSV and how to interpret it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealDatasetSpec {
    pub csv: PathBuf,
    pub treatment: String,
    pub outcome: String,
    pub proxies: Vec<String>,
    /// When set, the treatment column is binarized as (value >= threshold).
    #[serde(default)]
    pub treatment_threshold: Option<f64>,
    #[serde(default)]
    pub standardize_proxies: bool,
    #[serde(default)]
    pub standardize_outcome: bool,
    #[serde(default)]
    pub reference_interval: Option<(f64, f64)>,
    #[serde(default)]
    pub reference_estimate: Option<f64>,
}

impl RealDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.proxies.is_empty() {
            return Err(Error::InvalidArgument("at least one proxy column".into()));
        }
        let mut names = vec![self.treatment.clone(), self.outcome.clone()];
        names.extend(self.proxies.iter().cloned());
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::InvalidArgument(
                "treatment, outcome and proxy columns must be disjoint".into(),
            ));
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let spec: RealDatasetSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Load a real dataset per spec: column selection, optional treatment
/// binarization, optional z-scoring. The outcome scale is recorded in the
/// provenance so effects can be reported in original units.
pub fn load_csv(spec: &RealDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let path = &spec.csv;
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!("{}: column '{name}' not found", path.display()))
        })
    };
    let t_col = col(&spec.treatment)?;
    let y_col = col(&spec.outcome)?;
    let x_cols: Vec<usize> = spec.proxies.iter().map(|p| col(p)).collect::<Result<_>>()?;

    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: row {i}: {e}", path.display())))?;
        let cell = |c: usize| -> Result<f64> {
            record
                .get(c)
                .ok_or_else(|| {
                    Error::Data(format!("{}: row {i}: missing field {c}", path.display()))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|_| {
                    Error::Data(format!(
                        "{}: row {i}, column '{}': non-numeric value '{}'",
                        path.display(),
                        headers.get(c).unwrap_or(""),
                        record.get(c).unwrap_or("")
                    ))
                })
        };
        let raw_t = cell(t_col)?;
        let tv = match spec.treatment_threshold {
            Some(th) => {
                if raw_t >= th {
                    1.0
                } else {
                    0.0
                }
            }
            None => {
                if raw_t != 0.0 && raw_t != 1.0 {
                    return Err(Error::Data(format!(
                        "{}: row {i}: treatment value {raw_t} is not binary \
                         (set treatment_threshold to binarize)",
                        path.display()
                    )));
                }
                raw_t
            }
        };
        t.push(tv);
        y.push(cell(y_col)?);
        x_rows.push(x_cols.iter().map(|&c| cell(c)).collect::<Result<_>>()?);
    }
    let n = t.len();
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let mut x = Tensor::zeros((n, x_cols.len()));
    for (i, rowv) in x_rows.iter().enumerate() {
        for (j, &v) in rowv.iter().enumerate() {
            x[(i, j)] = v;
        }
    }

    if spec.standardize_proxies {
        for j in 0..x.ncols() {
            let colv = x.column(j);
            let mean = colv.mean().unwrap_or(0.0);
            let var = colv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std <= 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "proxy column '{}' is constant",
                    spec.proxies[j]
                )));
            }
            x.column_mut(j).mapv_inplace(|v| (v - mean) / std);
        }
    }
    let mut outcome_scale = None;
    if spec.standardize_outcome {
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std <= 0.0 {
            return Err(Error::DegenerateInput("outcome column is constant".into()));
        }
        for v in y.iter_mut() {
            *v = (*v - mean) / std;
        }
        outcome_scale = Some((mean, std));
    }

    let ds = Dataset {
        x,
        t,
        y,
        hidden: None,
        true_ate: None,
        provenance: Provenance::File {
            path: path.display().to_string(),
            outcome_scale,
            standardized_proxies: spec.standardize_proxies,
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Outcome of the real-data pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct RealReport {
    /// ATE on the original outcome scale.
    pub ate: f64,
    pub n: usize,
    pub reference_interval: Option<(f64, f64)>,
    pub reference_estimate: Option<f64>,
    pub within_interval: Option<bool>,
}

/// Train the FDVAE on a real dataset and report the front-door plug-in ATE
/// against the spec's reference interval.
pub fn run_real(spec: &RealDatasetSpec, model_cfg: &FdvaeConfig) -> Result<RealReport> {
    let dataset = load_csv(spec)?;
    let (model, _report) = train(&dataset, model_cfg).map_err(|f| f.error)?;
    let psi = model.infer_psi(&dataset)?;
    let est = ate_frontdoor_plugin(&psi, &dataset.t, &dataset.y)?;
    // undo outcome standardization: an ATE is scale-equivariant and
    // shift-invariant
    let scale = match &dataset.provenance {
        Provenance::File { outcome_scale: Some((_, std)), .. } => *std,
        _ => 1.0,
    };
    let ate = est.value * scale;
    let within = spec
        .reference_interval
        .map(|(lo, hi)| ate > lo && ate < hi);
    Ok(RealReport {
        ate,
        n: dataset.n(),
        reference_interval: spec.reference_interval,
        reference_estimate: spec.reference_estimate,
        within_interval: within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Setting;

    fn tiny_spec(name: &str, methods: Vec<MethodName>) -> ExperimentSpec {
        let mut base = SynthConfig::new(Setting::A, 800, 42);
        base.d_zfd = 1;
        let mut model = FdvaeConfig::new(1, 7);
        model.epochs = 2;
        model.hidden_widths = vec![8, 8];
        model.batch_size = 128;
        ExperimentSpec {
            name: name.into(),
            axis: SweepAxis::UScale,
            values: vec![0.0, 1.0],
            replications: 2,
            base,
            model,
            methods,
            output_dir: None,
        }
    }

    #[test]
    fn bundled_spec_files_parse() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
        for name in ["uscale_sweep.json", "dzfd_sweep.json"] {
            let spec = ExperimentSpec::from_path(&root.join("experiments").join(name)).unwrap();
            assert!(!spec.methods.is_empty(), "{name}");
        }
        for name in ["sachs.json", "401k.json", "schooling.json"] {
            let spec = RealDatasetSpec::from_path(&root.join("real").join(name)).unwrap();
            assert!(!spec.proxies.is_empty(), "{name}");
        }
    }

    #[test]
    fn row_count_arithmetic() {
        let spec = tiny_spec(
            "rows",
            vec![MethodName::BackdoorRegression, MethodName::Naive],
        );
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert!(rows.iter().all(|r| r.bias_pct.is_some()));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = tiny_spec("det", vec![MethodName::FdvaeFrontdoor, MethodName::Naive]);
        let run_with = |threads: usize| -> Vec<u8> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let rows = pool.install(|| run_experiment(&spec).unwrap());
            let dir = tempfile::tempdir().unwrap();
            emit_results(&rows, dir.path()).unwrap();
            std::fs::read(dir.path().join("results.csv")).unwrap()
        };
        let a = run_with(1);
        let b = run_with(4);
        assert_eq!(a, b);
    }

    #[test]
    fn error_rows_do_not_abort() {
        // n smaller than 2*batch_size makes training fail but leaves the
        // closed-form baselines fine
        let mut spec = tiny_spec(
            "err",
            vec![MethodName::FdvaeFrontdoor, MethodName::Naive],
        );
        spec.base.n = 100;
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        let fdvae_rows: Vec<_> =
            rows.iter().filter(|r| r.method == "fdvae_frontdoor").collect();
        assert!(fdvae_rows.iter().all(|r| r.error.is_some() && r.ate_hat.is_none()));
        let naive_rows: Vec<_> = rows.iter().filter(|r| r.method == "naive").collect();
        assert!(naive_rows.iter().all(|r| r.error.is_none() && r.ate_hat.is_some()));
    }

    #[test]
    fn empty_rows_emit_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_results(&[], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), RESULTS_COLUMNS.join(","));
        let summary: Summary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert!(summary.is_empty());
    }

    #[test]
    fn summary_matches_recomputation_from_csv() {
        let spec = tiny_spec("sum", vec![MethodName::BackdoorRegression, MethodName::Naive]);
        let rows = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&rows, dir.path()).unwrap();

        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let bias_idx = header.iter().position(|h| *h == "bias_pct").unwrap();
        let method_idx = header.iter().position(|h| *h == "method").unwrap();
        let value_idx = header.iter().position(|h| *h == "axis_value").unwrap();
        let mut recomputed: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if let Ok(b) = fields[bias_idx].parse::<f64>() {
                recomputed
                    .entry((fields[method_idx].into(), fields[value_idx].into()))
                    .or_default()
                    .push(b);
            }
        }
        let summary: Summary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        for ((method, value), biases) in recomputed {
            let cell = &summary[&method][&value];
            let mean = biases.iter().sum::<f64>() / biases.len() as f64;
            assert!((cell.mean_bias_pct.unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn plotdata_row_counts() {
        let spec = tiny_spec("plot", vec![MethodName::Naive]);
        let rows = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&rows, dir.path()).unwrap();
        let text =
            std::fs::read_to_string(dir.path().join("plotdata").join("naive.csv")).unwrap();
        // header + one row per axis value
        assert_eq!(text.lines().count(), 1 + spec.values.len());
    }

    fn write_fixture_csv(dir: &Path) -> PathBuf {
        let path = dir.join("fixture.csv");
        std::fs::write(
            &path,
            "a,tr,out,b\n1.0,0,2.0,5.0\n2.0,1,3.0,6.0\n3.0,1,4.0,7.0\n",
        )
        .unwrap();
        path
    }

    #[test]
    fn load_csv_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_fixture_csv(dir.path());
        let spec = RealDatasetSpec {
            csv,
            treatment: "tr".into(),
            outcome: "out".into(),
            proxies: vec!["a".into(), "b".into()],
            treatment_threshold: None,
            standardize_proxies: false,
            standardize_outcome: false,
            reference_interval: None,
            reference_estimate: None,
        };
        let ds = load_csv(&spec).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d_x(), 2);
        assert_eq!(ds.t, vec![0.0, 1.0, 1.0]);
        assert_eq!(ds.y, vec![2.0, 3.0, 4.0]);
        assert!(ds.hidden.is_none() && ds.true_ate.is_none());
    }

    #[test]
    fn load_csv_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_fixture_csv(dir.path());
        let spec = RealDatasetSpec {
            csv,
            treatment: "tr".into(),
            outcome: "out".into(),
            proxies: vec!["a".into(), "b".into()],
            treatment_threshold: None,
            standardize_proxies: true,
            standardize_outcome: true,
            reference_interval: None,
            reference_estimate: None,
        };
        let ds = load_csv(&spec).unwrap();
        for j in 0..2 {
            let col = ds.x.column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
        match &ds.provenance {
            Provenance::File { outcome_scale: Some((m, s)), .. } => {
                assert!((m - 3.0).abs() < 1e-12);
                assert!(*s > 0.0);
            }
            other => panic!("unexpected provenance {other:?}"),
        }
    }

    #[test]
    fn load_csv_errors_have_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,tr,out\n1.0,0,oops\n").unwrap();
        let spec = RealDatasetSpec {
            csv: path,
            treatment: "tr".into(),
            outcome: "out".into(),
            proxies: vec!["a".into()],
            treatment_threshold: None,
            standardize_proxies: false,
            standardize_outcome: false,
            reference_interval: None,
            reference_estimate: None,
        };
        let err = load_csv(&spec).unwrap_err().to_string();
        assert!(err.contains("row 0") && err.contains("out"), "{err}");

        let mut missing = spec.clone();
        missing.outcome = "nope".into();
        let err = load_csv(&missing).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn load_csv_binarizes_with_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thr.csv");
        std::fs::write(&path, "a,tr,out\n1.0,12,2.0\n2.0,16,3.0\n3.0,18,4.0\n").unwrap();
        let base = RealDatasetSpec {
            csv: path,
            treatment: "tr".into(),
            outcome: "out".into(),
            proxies: vec!["a".into()],
            treatment_threshold: Some(16.0),
            standardize_proxies: false,
            standardize_outcome: false,
            reference_interval: None,
            reference_estimate: None,
        };
        let ds = load_csv(&base).unwrap();
        assert_eq!(ds.t, vec![0.0, 1.0, 1.0]);

        let mut raw = base.clone();
        raw.treatment_threshold = None;
        assert!(load_csv(&raw).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = tiny_spec("v", vec![]);
        assert!(spec.validate().is_err());
        spec.methods = vec![MethodName::Naive];
        spec.replications = 0;
        assert!(spec.validate().is_err());

        let rspec = RealDatasetSpec {
            csv: PathBuf::from("x.csv"),
            treatment: "t".into(),
            outcome: "t".into(),
            proxies: vec!["a".into()],
            treatment_threshold: None,
            standardize_proxies: false,
            standardize_outcome: false,
            reference_interval: None,
            reference_estimate: None,
        };
        assert!(rspec.validate().is_err());
    }
}
