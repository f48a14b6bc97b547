//! Command-line surface: dataset generation, training, estimation,
//! benchmark sweeps, graph-criterion checks, and real-data evaluation.

use clap::{Args, Parser, Subcommand};
use fdvae::error::Error;
use fdvae::estimators::{ate_backdoor_regression, ate_frontdoor_plugin, naive_diff_means};
use fdvae::exp::{emit_results, run_experiment, run_real, ExperimentSpec, RealDatasetSpec};
use fdvae::graph::json::GraphDoc;
use fdvae::graph::{d_separated, is_valid_backdoor_set, is_valid_frontdoor_set};
use fdvae::model::{train, FdvaeConfig, FdvaeModel};
use fdvae::numerics::Checkpoint;
use fdvae::synth::{generate, read_dataset, write_dataset, Setting, SynthConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fdvae", version, about = "Front-door representation learning toolkit")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replication sweeps (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress progress output.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset and write it as CSV plus a JSON sidecar.
    Gen(GenArgs),
    /// Fit the model on a dataset file; save checkpoint and training log.
    Train(TrainArgs),
    /// Load a checkpoint and dataset; print ATE estimates and metrics.
    Estimate(EstimateArgs),
    /// Run an experiment spec (JSON) and persist results.
    Bench(BenchArgs),
    /// Evaluate graph criteria on a JSON graph document.
    CheckDag(CheckDagArgs),
    /// Run the pipeline on a real dataset spec and compare to its
    /// reference interval.
    EvalReal(EvalRealArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Which proxy topology to generate (A: proxies carry the mediator
    /// signal; B: they do not).
    #[arg(long, default_value = "A")]
    setting: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d_zfd: usize,
    #[arg(long, default_value_t = 8)]
    d_x: usize,
    #[arg(long, default_value_t = 1.0)]
    u_scale: f64,
    /// File stem for <stem>.csv and <stem>.json (default <out>/dataset).
    #[arg(long)]
    stem: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 1)]
    d_psi: usize,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    kl_weight: f64,
}

impl ModelArgs {
    fn to_config(&self, seed: u64) -> FdvaeConfig {
        let mut cfg = FdvaeConfig::new(self.d_psi, seed);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg.hidden_widths = self.widths.clone();
        cfg.kl_weight = self.kl_weight;
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file stem (as produced by `gen`).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset file stem (as produced by `gen`).
    #[arg(long)]
    data: PathBuf,
    /// Model directory (as produced by `train`).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// ExperimentSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct CheckDagArgs {
    /// Graph document (JSON with nodes, edges, optional roles/CPTs).
    #[arg(long)]
    graph: PathBuf,
    /// Criterion to check: backdoor, frontdoor, or dsep.
    #[arg(long)]
    criterion: String,
    /// Candidate set (comma-separated node names; may be empty for dsep).
    #[arg(long, value_delimiter = ',', default_value = "")]
    set: Vec<String>,
    /// Treatment node (backdoor/frontdoor) or first node set for dsep
    /// (comma-separated).
    #[arg(long, value_delimiter = ',')]
    a: Vec<String>,
    /// Outcome node (backdoor/frontdoor) or second node set for dsep.
    #[arg(long, value_delimiter = ',')]
    b: Vec<String>,
}

#[derive(Args)]
struct EvalRealArgs {
    /// RealDatasetSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::UnsupportedInput(_) => 1,
        Error::DegenerateInput(_) | Error::ResourceLimit(_) | Error::Data(_) | Error::Io { .. } => 2,
        Error::TrainingDivergence(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success, anything else is a usage
            // error
            use clap::error::ErrorKind;
            let ok = matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: &Cli) -> fdvae::Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Estimate(args) => cmd_estimate(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
        Command::CheckDag(args) => cmd_check_dag(cli, args),
        Command::EvalReal(args) => cmd_eval_real(cli, args),
    }
}

fn ensure_out(cli: &Cli) -> fdvae::Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(cli.out.display().to_string(), e))
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> fdvae::Result<()> {
    let setting = match args.setting.as_str() {
        "A" | "a" => Setting::A,
        "B" | "b" => Setting::B,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown setting '{other}' (expected A or B)"
            )))
        }
    };
    let mut cfg = SynthConfig::new(setting, args.n, cli.seed);
    cfg.d_zfd = args.d_zfd;
    cfg.d_x = args.d_x;
    cfg.u_scale = args.u_scale;
    let dataset = generate(&cfg)?;
    ensure_out(cli)?;
    let stem = args.stem.clone().unwrap_or_else(|| cli.out.join("dataset"));
    write_dataset(&dataset, &stem)?;
    if !cli.quiet {
        println!(
            "wrote {} rows to {}.csv (true ATE {})",
            dataset.n(),
            stem.display(),
            dataset.true_ate.map(|v| format!("{v:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> fdvae::Result<()> {
    let dataset = read_dataset(&args.data)?;
    let cfg = args.model.to_config(cli.seed);
    let (model, report) = train(&dataset, &cfg).map_err(|f| f.error)?;
    ensure_out(cli)?;
    let ckpt_path = cli.out.join("checkpoint.json");
    model.to_checkpoint().save(&ckpt_path)?;
    let cfg_path = cli.out.join("model_config.json");
    let cfg_doc = serde_json::json!({ "config": cfg, "d_x": dataset.d_x() });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg_doc).expect("config json"))
        .map_err(|e| Error::io(cfg_path.display().to_string(), e))?;
    let log_path = cli.out.join("train_log.json");
    std::fs::write(
        &log_path,
        serde_json::to_string_pretty(&report).expect("report json"),
    )
    .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    if !cli.quiet {
        let last = report.epochs.last().expect("at least one epoch");
        println!(
            "trained {} epochs in {:.1}s (final loss {:.4}); model saved to {}",
            report.final_epoch,
            report.wall_clock_seconds,
            last.loss,
            cli.out.display()
        );
    }
    Ok(())
}

fn load_model(dir: &PathBuf) -> fdvae::Result<FdvaeModel> {
    let cfg_path = dir.join("model_config.json");
    let text = std::fs::read_to_string(&cfg_path)
        .map_err(|e| Error::io(cfg_path.display().to_string(), e))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", cfg_path.display())))?;
    let cfg: FdvaeConfig = serde_json::from_value(doc["config"].clone())
        .map_err(|e| Error::Data(format!("{}: config: {e}", cfg_path.display())))?;
    let d_x = doc["d_x"]
        .as_u64()
        .ok_or_else(|| Error::Data(format!("{}: missing d_x", cfg_path.display())))?
        as usize;
    let ckpt = Checkpoint::load(&dir.join("checkpoint.json"))?;
    FdvaeModel::from_checkpoint(&ckpt, &cfg, d_x)
}

fn cmd_estimate(_cli: &Cli, args: &EstimateArgs) -> fdvae::Result<()> {
    let dataset = read_dataset(&args.data)?;
    let model = load_model(&args.model)?;
    let psi = model.infer_psi(&dataset)?;
    let fd = ate_frontdoor_plugin(&psi, &dataset.t, &dataset.y)?;
    let bd = ate_backdoor_regression(&dataset.x, &dataset.t, &dataset.y)?;
    let naive = naive_diff_means(&dataset.t, &dataset.y)?;
    let mut out = serde_json::json!({
        "fdvae_frontdoor": fd.value,
        "backdoor_regression": bd.value,
        "naive": naive.value,
    });
    if let Some(truth) = dataset.true_ate {
        out["ate_true"] = truth.into();
        if truth != 0.0 {
            out["fdvae_frontdoor_bias_pct"] = (((fd.value - truth) / truth).abs() * 100.0).into();
        }
    }
    if let Some(h) = dataset.hidden.as_ref() {
        let p: Vec<f64> = psi.column(0).to_vec();
        let z: Vec<f64> = h.z_fd.column(0).to_vec();
        if let Ok(r) = fdvae::numerics::pcc(&p, &z) {
            out["pcc_psi_zfd"] = r.abs().into();
        }
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> fdvae::Result<()> {
    let spec = ExperimentSpec::from_path(&args.spec)?;
    let rows = run_experiment(&spec)?;
    let dir = spec.output_dir.clone().unwrap_or_else(|| cli.out.clone());
    emit_results(&rows, &dir)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    if !cli.quiet {
        println!(
            "{} rows ({} failures) written to {}",
            rows.len(),
            failures,
            dir.display()
        );
    }
    if failures > 0 {
        return Err(Error::TrainingDivergence(format!(
            "{failures} replication(s) failed; see error column in results.csv"
        )));
    }
    Ok(())
}

fn cmd_check_dag(_cli: &Cli, args: &CheckDagArgs) -> fdvae::Result<()> {
    let doc = GraphDoc::from_path(&args.graph)?;
    let dag = doc.to_dag()?;
    let set: Vec<&str> = args.set.iter().filter(|s| !s.is_empty()).map(|s| s.as_str()).collect();
    let a: Vec<&str> = args.a.iter().map(|s| s.as_str()).collect();
    let b: Vec<&str> = args.b.iter().map(|s| s.as_str()).collect();
    let one = |v: &[&str], name: &str| -> fdvae::Result<String> {
        if v.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "--{name} must name exactly one node for this criterion"
            )));
        }
        Ok(v[0].to_string())
    };
    let verdict = match args.criterion.as_str() {
        "backdoor" => {
            let t = one(&a, "a")?;
            let y = one(&b, "b")?;
            is_valid_backdoor_set(&dag, &set, &t, &y)?
        }
        "frontdoor" => {
            let t = one(&a, "a")?;
            let y = one(&b, "b")?;
            is_valid_frontdoor_set(&dag, &set, &t, &y)?
        }
        "dsep" => d_separated(&dag, &a, &b, &set)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown criterion '{other}' (expected backdoor, frontdoor, or dsep)"
            )))
        }
    };
    println!("{verdict}");
    Ok(())
}

fn cmd_eval_real(cli: &Cli, args: &EvalRealArgs) -> fdvae::Result<()> {
    let spec = RealDatasetSpec::from_path(&args.spec)?;
    let cfg = args.model.to_config(cli.seed);
    let report = run_real(&spec, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(())
}
