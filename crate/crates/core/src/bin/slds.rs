//! `slds`: simulate data, train sparse or ordinary LDS models, forecast and
//! run the AMAE benchmark sweep.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use slds_core::data_io::{
    data_fingerprint, load_model, load_sequences, save_model, write_report, write_sequences_csv, ModelMeta,
    DEFAULT_STEP_SECONDS,
};
use slds_core::evaluation::{mean_std, run_benchmark, sample_tasks, BenchmarkConfig, TaskEvaluator};
use slds_core::forecasting::predict_observation;
use slds_core::model::{random_sparse_model, simulate_dataset, SparseModelSpec};
use slds_core::{derive_seed, em_fit, FitConfig, SldsError};

#[derive(Parser, Debug)]
#[command(name = "slds", version, about = "Sparse linear dynamical systems")]
struct Cli {
    /// JSON file with defaults for any fitting option; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Spacing of the regular time grid in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    step_seconds: Option<i64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic series from a random stable model with a sparse transition matrix.
    Simulate(SimulateArgs),
    /// Fit a model by MAP-EM; beta 0 gives ordinary maximum-likelihood EM.
    Train(TrainArgs),
    /// Print the prediction of y_phi from y_1..y_psi of every input series.
    Predict(PredictArgs),
    /// Score a model on a test set by AMAE over repeated task samples.
    Evaluate(EvaluateArgs),
    /// Fit every (states, beta) cell and write the benchmark reports.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    obs_dim: usize,
    #[arg(long)]
    length: usize,
    #[arg(long)]
    num_series: usize,
    /// Fraction of exactly-zero entries in the transition matrix.
    #[arg(long, default_value_t = 0.5)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also save the generating model here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

/// Fitting options; unset values fall back to the config file, then the defaults.
#[derive(Args, Debug, Default, Clone)]
struct FitArgs {
    #[arg(long, visible_alias = "max-iter")]
    em_max_iter: Option<usize>,
    #[arg(long, visible_alias = "tol")]
    em_tol: Option<f64>,
    #[arg(long)]
    prox_max_iter: Option<usize>,
    #[arg(long)]
    prox_tol: Option<f64>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    states: usize,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    model_out: PathBuf,
    /// Write the fit diagnostics as JSON.
    #[arg(long)]
    diagnostics_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Length of the observed prefix (one-based).
    #[arg(long)]
    psi: usize,
    /// Time index to predict (one-based, greater than psi).
    #[arg(long)]
    phi: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    tasks_per_series: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-repeat scores as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,12,15")]
    states: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,10,100")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 5)]
    tasks_per_series: usize,
    /// Hold out this fraction of the training series to choose beta per state size.
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Contents of `--config`. Every field is optional.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    em_max_iter: Option<usize>,
    em_tol: Option<f64>,
    prox_max_iter: Option<usize>,
    prox_tol: Option<f64>,
    jitter: Option<f64>,
    seed: Option<u64>,
    step_seconds: Option<i64>,
}

/// A problem with the command line itself, reported with exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<SldsError>() {
            return match e {
                SldsError::Numerical(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

struct Settings {
    file: ConfigFile,
    step_seconds: i64,
}

impl Settings {
    fn load(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let step_seconds = cli.step_seconds.or(file.step_seconds).unwrap_or(DEFAULT_STEP_SECONDS);
        if step_seconds <= 0 {
            return Err(usage("step-seconds must be positive"));
        }
        Ok(Self { file, step_seconds })
    }

    fn fit_config(&self, states: usize, beta: f64, args: &FitArgs) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(states, beta);
        let f = &self.file;
        cfg.em_max_iter = args.em_max_iter.or(f.em_max_iter).unwrap_or(cfg.em_max_iter);
        cfg.em_tol = args.em_tol.or(f.em_tol).unwrap_or(cfg.em_tol);
        cfg.prox_max_iter = args.prox_max_iter.or(f.prox_max_iter).unwrap_or(cfg.prox_max_iter);
        cfg.prox_tol = args.prox_tol.or(f.prox_tol).unwrap_or(cfg.prox_tol);
        cfg.jitter = args.jitter.or(f.jitter).unwrap_or(cfg.jitter);
        cfg.seed = args.seed.or(f.seed).unwrap_or(cfg.seed);
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn log_config(command: &str, cfg: &impl Serialize) {
    let json = serde_json::to_string(cfg).unwrap_or_default();
    info!("{command} configuration: {json}");
}

fn load_data(path: &Path, step_seconds: i64) -> Result<Vec<slds_core::ObservationSequence>> {
    load_sequences(path, step_seconds).with_context(|| format!("loading {}", path.display()))
}

#[derive(Serialize)]
struct SimulateEcho<'a> {
    states: usize,
    obs_dim: usize,
    length: usize,
    num_series: usize,
    sparsity: f64,
    seed: u64,
    step_seconds: i64,
    out: &'a Path,
}

fn simulate(args: &SimulateArgs, settings: &Settings) -> Result<()> {
    if args.states == 0 || args.obs_dim == 0 || args.length == 0 || args.num_series == 0 {
        return Err(usage("states, obs-dim, length and num-series must be positive"));
    }
    if !(0.0..1.0).contains(&args.sparsity) {
        return Err(usage("sparsity must lie in [0, 1)"));
    }
    log_config(
        "simulate",
        &SimulateEcho {
            states: args.states,
            obs_dim: args.obs_dim,
            length: args.length,
            num_series: args.num_series,
            sparsity: args.sparsity,
            seed: args.seed,
            step_seconds: settings.step_seconds,
            out: &args.out,
        },
    );
    let spec = SparseModelSpec::new(args.states, args.obs_dim, args.sparsity);
    let truth = random_sparse_model(&spec, args.seed).context("drawing the generating model")?;
    let data = simulate_dataset(&truth, args.num_series, args.length, derive_seed(args.seed, 1))
        .context("simulating series")?;
    let names: Vec<String> = (1..=args.obs_dim).map(|k| format!("y{k}")).collect();
    write_sequences_csv(&args.out, &data, &names, settings.step_seconds)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.model_out {
        let meta = ModelMeta { beta: 0.0, iterations: 0, final_objective: None, data_fingerprint: String::new() };
        save_model(&truth, &meta, path).with_context(|| format!("writing {}", path.display()))?;
    }
    info!("wrote {} series to {}", data.len(), args.out.display());
    Ok(())
}

fn train(args: &TrainArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.fit_config(args.states, args.beta, &args.fit)?;
    log_config("train", &cfg);
    let data = load_data(&args.input, settings.step_seconds)?;
    let (params, diag) = em_fit(&data, &cfg).context("training")?;
    info!(
        "EM ran {} iterations (converged: {}), objective {:.6}, {} monotonicity breaches",
        diag.iterations_run,
        diag.converged,
        diag.final_objective,
        diag.monotonicity_breaches.len()
    );
    let meta = ModelMeta {
        beta: cfg.beta,
        iterations: diag.iterations_run,
        final_objective: Some(diag.final_objective),
        data_fingerprint: data_fingerprint(&data),
    };
    save_model(&params, &meta, &args.model_out).with_context(|| format!("writing {}", args.model_out.display()))?;
    if let Some(path) = &args.diagnostics_out {
        let json = serde_json::to_string_pretty(&diag)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn predict(args: &PredictArgs, settings: &Settings) -> Result<()> {
    if args.psi == 0 || args.phi <= args.psi {
        return Err(usage(format!("need 1 <= psi < phi, got psi={} phi={}", args.psi, args.phi)));
    }
    log_config("predict", &serde_json::json!({
        "model": args.model, "input": args.input, "psi": args.psi, "phi": args.phi,
        "step_seconds": settings.step_seconds,
    }));
    let (params, _) = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let data = load_data(&args.input, settings.step_seconds)?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    let mut header = vec!["series_id".to_string()];
    header.extend((1..=params.obs_dim()).map(|k| format!("y{k}")));
    out.write_record(&header)?;
    for (i, series) in data.iter().enumerate() {
        let id = series.series_id.clone().unwrap_or_else(|| i.to_string());
        let y = predict_observation(&params, series, args.psi, args.phi)
            .with_context(|| format!("predicting series {id}"))?;
        let mut row = vec![id];
        row.extend(y.iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateOutput {
    amae: Vec<f64>,
    mean: f64,
    std: f64,
    tasks_per_repeat: Vec<usize>,
}

fn evaluate(args: &EvaluateArgs, settings: &Settings) -> Result<()> {
    if args.repeats == 0 || args.tasks_per_series == 0 {
        return Err(usage("repeats and tasks-per-series must be positive"));
    }
    log_config("evaluate", &serde_json::json!({
        "model": args.model, "input": args.input, "tasks_per_series": args.tasks_per_series,
        "repeats": args.repeats, "seed": args.seed, "step_seconds": settings.step_seconds,
    }));
    let (params, _) = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let data = load_data(&args.input, settings.step_seconds)?;
    let eval = TaskEvaluator::new(&params, &data).context("evaluating")?;
    let mut amae = Vec::with_capacity(args.repeats);
    let mut counts = Vec::with_capacity(args.repeats);
    for r in 0..args.repeats {
        let tasks = sample_tasks(&data, args.tasks_per_series, derive_seed(args.seed, r as u64))
            .context("sampling tasks")?;
        counts.push(tasks.len());
        amae.push(eval.amae(&tasks).with_context(|| format!("scoring repeat {r}"))?);
    }
    let (mean, std) = mean_std(&amae);
    info!("AMAE {mean:.6} (sd {std:.6}) over {} repeats", args.repeats);
    println!("{mean}\t{std}");
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&EvaluateOutput { amae, mean, std, tasks_per_repeat: counts })?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs, settings: &Settings) -> Result<()> {
    if args.states.is_empty() || args.states.contains(&0) {
        return Err(usage("states must be a nonempty list of positive sizes"));
    }
    if args.betas.is_empty() || args.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(usage("betas must be a nonempty list of finite nonnegative values"));
    }
    if args.repeats == 0 || args.tasks_per_series == 0 {
        return Err(usage("repeats and tasks-per-series must be positive"));
    }
    if let Some(f) = args.validation_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(usage("validation-fraction must lie in (0, 1)"));
        }
    }
    let mut cfg = BenchmarkConfig::new(args.states.clone(), args.betas.clone());
    cfg.fit = settings.fit_config(1, 0.0, &args.fit)?;
    cfg.seed = cfg.fit.seed;
    cfg.repeats = args.repeats;
    cfg.tasks_per_series = args.tasks_per_series;
    cfg.validation_fraction = args.validation_fraction;
    log_config("sweep", &serde_json::json!({
        "train": args.train, "test": args.test, "states": cfg.state_sizes, "betas": cfg.betas,
        "repeats": cfg.repeats, "tasks_per_series": cfg.tasks_per_series, "seed": cfg.seed,
        "validation_fraction": cfg.validation_fraction, "fit": cfg.fit, "step_seconds": settings.step_seconds,
        "out_dir": args.out_dir,
    }));
    let train = load_data(&args.train, settings.step_seconds)?;
    let test = load_data(&args.test, settings.step_seconds)?;
    let result = run_benchmark(&train, &test, &cfg).context("running the sweep")?;
    for cell in result.cells.iter().filter(|c| !c.ok()) {
        log::warn!(
            "cell states={} beta={} failed: {}",
            cell.states,
            cell.beta,
            cell.error.as_deref().unwrap_or_default()
        );
    }
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let files = write_report(&result, &args.out_dir).context("writing reports")?;
    for f in files {
        info!("wrote {}", f.display());
    }
    Ok(())
}

/// The error chain joined by ": ", skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(&cli)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &settings),
        Command::Train(a) => train(a, &settings),
        Command::Predict(a) => predict(a, &settings),
        Command::Evaluate(a) => evaluate(a, &settings),
        Command::Sweep(a) => sweep(a, &settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
