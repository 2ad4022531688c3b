//! The `gdsoftmax` command-line front end.
//!
//! Subcommands:
//!
//! * `verify` runs the analytic property suite and prints one JSON object
//!   per property.
//! * `sweep` trains one seeded model per beta (plus an optional warm-up run)
//!   and writes accuracy, calibration and confidence-count tables.
//! * `trace` records per-sample confidence during one run and groups the
//!   samples by early difficulty.
//! * `calib` computes reliability bins and a temperature fit for a stored
//!   logits file.
//! * `warmup-demo` prints the warm-up schedule as a `t,beta` table.
//!
//! Every flag can also be given in a flat `key = value` file passed with
//! `--config`; flags on the command line win. All outputs are plain CSV or
//! JSON without timestamps, so reruns with the same flags produce identical
//! files.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calibration::{
    self, CalibrationError, CalibrationReport, PredictionSet, DEFAULT_BINS, DEFAULT_THRESHOLDS,
};
use crate::datasets::{self, BlobsConfig, DataError, Dataset};
use crate::loss::{LossParams, Stability};
use crate::oracle::{self, FdConfig, DEFAULT_BETAS};
use crate::schedule::{Granularity, WarmupSchedule};
use crate::trainer::{
    self, BetaSource, MlpModel, TrainConfig, TrainError, TrainOutcome, DEFAULT_TRACE_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default hidden width for blobs runs when `--model` is absent.
pub const DEFAULT_BLOBS_HIDDEN: usize = 64;
pub const MNIST_DIMS: [usize; 3] = [50, 20, 10];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// One entry of a sweep: a fixed beta or a warm-up schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunKind {
    Fixed(f64),
    Warmup(WarmupSchedule),
}

impl RunKind {
    /// Directory name and `run` column value.
    pub fn label(&self) -> String {
        match self {
            Self::Fixed(beta) => format!("beta_{beta}"),
            Self::Warmup(_) => "warmup".to_string(),
        }
    }

    /// The beta in effect once training has settled.
    pub fn final_beta(&self) -> f64 {
        match self {
            Self::Fixed(beta) => *beta,
            Self::Warmup(s) => s.beta_end(),
        }
    }

    pub fn source(&self, tau: f64, stability: Stability) -> Result<BetaSource, RunError> {
        Ok(match *self {
            Self::Fixed(beta) => {
                BetaSource::Fixed(LossParams::new(beta, tau, stability).map_err(TrainError::from)?)
            }
            Self::Warmup(schedule) => BetaSource::Warmup {
                schedule,
                tau,
                stability,
            },
        })
    }
}

/// Shared settings of the runs in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// Hidden and output widths; the input width comes from the data.
    pub layers: Vec<usize>,
    pub train: TrainConfig,
    pub tau: f64,
    pub stability: Stability,
    pub bins: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub beta: Option<f64>,
    pub ece: f64,
    pub mce: f64,
    pub mean_conf: f64,
    pub interval_counts: Vec<usize>,
    pub accuracy: f64,
    /// Fitted temperature; 1 when the labels cannot support a fit.
    pub temperature: f64,
    /// Mean NLL of the labels at the evaluation temperature.
    pub nll: f64,
    pub nll_temperature: f64,
    pub ece_temperature: f64,
}

impl RunReport {
    /// Calibration of `logits` at temperature `tau`, plus a temperature fit.
    pub fn from_logits(
        beta: Option<f64>,
        logits: &Array2<f64>,
        labels: &[usize],
        tau: f64,
        bins: usize,
    ) -> Result<(Self, CalibrationReport), RunError> {
        let preds = PredictionSet::from_logits(logits.view(), labels.to_vec(), tau)?;
        let cal = CalibrationReport::compute(&preds, bins)?;
        let temperature = match calibration::fit_temperature(logits.view(), labels) {
            Ok(t) => t,
            Err(CalibrationError::DegenerateLabels) => 1.0,
            Err(e) => return Err(e.into()),
        };
        let scaled = PredictionSet::from_logits(logits.view(), labels.to_vec(), temperature)?;
        let report = Self {
            beta,
            ece: cal.ece,
            mce: cal.mce,
            mean_conf: cal.mean_conf,
            interval_counts: cal.interval_counts.clone(),
            accuracy: cal.accuracy,
            temperature,
            nll: calibration::mean_nll(logits.view(), labels, tau),
            nll_temperature: calibration::mean_nll(logits.view(), labels, temperature),
            ece_temperature: calibration::ece(&scaled, bins)?,
        };
        Ok((report, cal))
    }
}

/// Everything recorded for one finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub kind: RunKind,
    pub outcome: TrainOutcome,
    pub test_logits: Array2<f64>,
    /// Calibration of the test split.
    pub test: CalibrationReport,
    pub report: RunReport,
    /// Interval counts of the final training-set true-class probabilities.
    pub train_counts: Vec<usize>,
    pub train_acc: f64,
    /// Mean final training-set true-class probability.
    pub mean_train_conf: f64,
}

impl RunSummary {
    pub fn top1_acc(&self) -> f64 {
        self.test.accuracy
    }
}

/// Input and layer widths for a run on `data`.
pub fn model_dims(layers: &[usize], data: &Dataset) -> Result<Vec<usize>, String> {
    match layers.last() {
        None => Err("model needs at least an output layer".into()),
        Some(_) if layers.contains(&0) => Err("layer widths must be positive".into()),
        Some(&out) if out != data.classes => Err(format!(
            "output width {out} does not match the {} classes of the data",
            data.classes
        )),
        Some(_) => Ok(std::iter::once(data.dim())
            .chain(layers.iter().copied())
            .collect()),
    }
}

/// Trains one freshly initialised model (seeded by `settings.train.seed`)
/// and summarises it.
pub fn run_one(
    kind: RunKind,
    settings: &RunSettings,
    train: &Dataset,
    test: &Dataset,
) -> Result<RunSummary, RunError> {
    let dims = model_dims(&settings.layers, train).map_err(TrainError::Config)?;
    let model = MlpModel::new(&dims, settings.train.seed)?;
    let source = kind.source(settings.tau, settings.stability)?;
    let outcome = trainer::train(model, train, Some(test), &settings.train, &source)?;

    let test_logits = outcome.model.predict_logits(test)?;
    let (report, test_cal) = RunReport::from_logits(
        Some(kind.final_beta()),
        &test_logits,
        &test.labels,
        settings.tau,
        settings.bins,
    )?;
    let p_train = &outcome.final_train_p_true;
    let train_counts = calibration::confidence_table(p_train, &DEFAULT_THRESHOLDS)?;
    let last = outcome.epochs.last().expect("at least one epoch");
    Ok(RunSummary {
        kind,
        train_acc: last.train_acc,
        mean_train_conf: p_train.iter().sum::<f64>() / p_train.len() as f64,
        train_counts,
        test: test_cal,
        report,
        test_logits,
        outcome,
    })
}

/// Runs every entry concurrently; results come back in input order.
pub fn run_sweep(
    kinds: &[RunKind],
    settings: &RunSettings,
    train: &Dataset,
    test: &Dataset,
) -> Vec<Result<RunSummary, RunError>> {
    kinds
        .par_iter()
        .map(|&k| run_one(k, settings, train, test))
        .collect()
}

fn count_header() -> String {
    let t = DEFAULT_THRESHOLDS;
    let mut cols = vec![format!("le_{}", t[0])];
    cols.extend(t.windows(2).map(|w| format!("{}_{}", w[0], w[1])));
    cols.push(format!("gt_{}", t[t.len() - 1]));
    cols.join(",")
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Writes the per-run files of a finished run into `dir`.
pub fn write_run_dir(dir: &Path, run: &RunSummary, test: &Dataset) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    trainer::write_epoch_metrics_csv(&mut buf, &run.outcome.epochs)?;
    fs::write(dir.join("epochs.csv"), &buf)?;
    fs::write(dir.join("reliability.csv"), run.test.reliability_csv())?;
    let conf = format!(
        "split,{}\ntrain,{}\ntest,{}\n",
        count_header(),
        join(&run.train_counts),
        join(&run.test.interval_counts)
    );
    fs::write(dir.join("confidence.csv"), conf)?;
    fs::write(dir.join("report.json"), to_json(&run.report) + "\n")?;
    buf.clear();
    calibration::write_logits_csv(&mut buf, run.test_logits.view(), &test.labels)?;
    fs::write(dir.join("test_logits.csv"), &buf)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serialises")
}

/// Summary row header of `sweep.csv`.
pub const SWEEP_HEADER: &str = "run,beta,top1_acc,train_acc,ece,mce,mean_conf,status";

pub fn sweep_row(kind: RunKind, result: &Result<RunSummary, RunError>) -> String {
    let head = format!("{},{}", kind.label(), kind.final_beta());
    match result {
        Ok(r) => format!(
            "{head},{},{},{},{},{},ok",
            r.top1_acc(),
            r.train_acc,
            r.test.ece,
            r.test.mce,
            r.test.mean_conf
        ),
        Err(RunError::Train(TrainError::Diverged { epoch, batch })) => {
            format!("{head},,,,,,diverged at epoch {epoch} batch {batch}")
        }
        Err(e) => format!("{head},,,,,,failed: {}", e.to_string().replace(',', ";")),
    }
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "gdsoftmax",
    version,
    about = "Gradient-decay softmax: verification, sweeps and calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the analytic properties of the loss against independent
    /// numerical references.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Train one model per beta and tabulate accuracy and calibration.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Record per-sample confidence during training and group by difficulty.
    #[command(args_override_self = true)]
    Trace(TraceArgs),
    /// Calibration report for a stored logits CSV.
    #[command(args_override_self = true)]
    Calib(CalibArgs),
    /// Print the warm-up schedule as a `t,beta` table.
    #[command(args_override_self = true)]
    WarmupDemo(WarmupArgs),
}

#[derive(Debug, Clone, PartialEq)]
struct BetaList(Vec<f64>);

fn parse_beta(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("beta must be positive and finite, got {v}"))
    }
}

fn parse_betas(s: &str) -> Result<BetaList, String> {
    s.split(',')
        .map(parse_beta)
        .collect::<Result<_, _>>()
        .map(BetaList)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {v}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layers(Vec<usize>);

fn parse_layers(s: &str) -> Result<Layers, String> {
    s.split(',')
        .map(|w| match w.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("bad layer width `{w}`")),
            Ok(n) => Ok(n),
        })
        .collect::<Result<_, _>>()
        .map(Layers)
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Flat `key = value` file of flag defaults (keys are flag names).
    #[arg(long, value_name = "FILE")]
    #[allow(dead_code)] // consumed before parsing
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Single beta to check.
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, conflicts_with = "betas")]
    beta: Option<f64>,
    /// Comma-separated betas [default: 0.01,0.1,1,5,20].
    #[arg(long, value_parser = parse_betas, allow_hyphen_values = true)]
    betas: Option<BetaList>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
    /// Relative tolerance of the gradient check.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Random logit vectors per beta.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON-lines report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetKind {
    Blobs,
    Mnist,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Blobs)]
    dataset: DatasetKind,
    /// MNIST IDX directory [default: $MNIST_DIR, else data/mnist].
    #[arg(long, value_name = "DIR")]
    mnist_dir: Option<PathBuf>,
    /// Hidden and output widths, e.g. `50,20,10`.
    #[arg(long, value_parser = parse_layers)]
    model: Option<Layers>,
    #[arg(long, default_value_t = 1e-3, value_parser = parse_positive)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Seeds initialisation, shuffling and blob generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rescale each batch gradient to at most this global norm.
    #[arg(long, value_parser = parse_positive)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    tau: f64,
    /// Subtract this constant from the logits instead of the running max.
    #[arg(long, allow_hyphen_values = true)]
    fixed_shift: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Warm-up start value [default: 0.1].
    #[arg(long, value_parser = parse_beta)]
    beta_initial: Option<f64>,
    /// Warm-up end value [default: 1].
    #[arg(long, value_parser = parse_beta)]
    beta_end: Option<f64>,
    /// Enables a warm-up run of this many steps.
    #[arg(long)]
    warmup_iters: Option<u64>,
    /// `iteration` or `epoch`.
    #[arg(long, default_value_t = Granularity::PerIteration)]
    warmup_granularity: Granularity,
    #[command(flatten)]
    blobs: BlobsArgs,
}

#[derive(Debug, Args)]
struct BlobsArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 250)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Single beta, instead of `--betas`.
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, conflicts_with = "betas")]
    beta: Option<f64>,
    /// Comma-separated betas [default: 1].
    #[arg(long, value_parser = parse_betas, allow_hyphen_values = true)]
    betas: Option<BetaList>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, value_name = "DIR", default_value = "sweep_out")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, default_value_t = 1.0)]
    beta: f64,
    /// Number of difficulty groups.
    #[arg(long, default_value_t = 5)]
    groups: usize,
    /// Trace only the first N training samples.
    #[arg(long)]
    trace_limit: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, value_name = "DIR", default_value = "trace_out")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct CalibArgs {
    /// CSV with header `label,z0,z1,...`.
    #[arg(long, value_name = "FILE")]
    logits: PathBuf,
    /// Beta the logits were trained with, copied into the report.
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_name = "DIR", default_value = "calib_out")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct WarmupArgs {
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, default_value_t = 0.1)]
    beta_initial: f64,
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, default_value_t = 1.0)]
    beta_end: f64,
    #[arg(long, default_value_t = 1000)]
    warmup_iters: u64,
    #[arg(long, default_value_t = Granularity::PerIteration)]
    warmup_granularity: Granularity,
    #[command(flatten)]
    config: ConfigArg,
}

// ---------------------------------------------------------------------------
// Dispatch

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure(e: impl ToString) -> CliError {
    CliError::Failure(e.to_string())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        failure(e)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 success, 1 failure, 2 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(a, out, err),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Trace(a) => cmd_trace(a, out),
        Command::Calib(a) => cmd_calib(a, out),
        Command::WarmupDemo(a) => cmd_warmup_demo(a, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Splices the entries of a `--config` file in front of the command-line
/// flags, right after the subcommand name.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let Some(s) = a.to_str() else { continue };
        if s == "--" {
            break;
        }
        if s == "--config" {
            path = Some(args.get(i + 1).ok_or("--config needs a file")?.clone());
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let flags = parse_config(&text)?;
    let at = args.len().min(2);
    args.splice(at..at, flags.into_iter().map(OsString::from));
    Ok(args)
}

fn parse_config(text: &str) -> Result<Vec<String>, String> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
        let key = key.trim().replace('_', "-");
        let valid = !key.is_empty()
            && key != "config"
            && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
            && !key.starts_with('-');
        if !valid {
            return Err(format!("config line {}: bad key `{}`", n + 1, key));
        }
        flags.push(format!("--{key}={}", value.trim()));
    }
    Ok(flags)
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let betas = match (a.beta, a.betas) {
        (Some(b), _) => vec![b],
        (None, Some(list)) => list.0,
        (None, None) => DEFAULT_BETAS.to_vec(),
    };
    let fd = FdConfig {
        step: a.fd_step,
        rel_tol: a.rel_tol,
        trials: a.trials,
        seed: a.seed,
    };
    fd.validate().map_err(usage)?;
    let report = oracle::verify_all(&fd, &betas).map_err(failure)?;
    match &a.out {
        Some(path) => {
            let mut buf = Vec::new();
            report.write_json_lines(&mut buf)?;
            fs::write(path, buf)?;
        }
        None => report.write_json_lines(&mut &mut *out)?,
    }
    for f in report.failing() {
        writeln!(
            err,
            "FAIL {} beta={} worst_error={:e} tolerance={:e}",
            f.property, f.beta, f.worst_error, f.tolerance
        )?;
    }
    Ok(if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn load_data(t: &TrainArgs) -> Result<(Dataset, Dataset), CliError> {
    match t.dataset {
        DatasetKind::Blobs => {
            let cfg = BlobsConfig {
                classes: t.blobs.classes,
                dim: t.blobs.dim,
                n_per_class: t.blobs.n_per_class,
                sigma: t.blobs.sigma,
                radius: t.blobs.radius,
                seed: t.seed,
            };
            datasets::make_blobs(&cfg).map_err(|e| match e {
                DataError::InvalidConfig(_) => usage(e),
                e => failure(e),
            })
        }
        DatasetKind::Mnist => {
            let dir = t.mnist_dir.clone().unwrap_or_else(default_mnist_dir);
            datasets::load_mnist_dir(&dir)
                .map_err(|e| failure(format!("loading MNIST from {}: {e}", dir.display())))
        }
    }
}

/// `$MNIST_DIR`, else `data/mnist` relative to the working directory.
pub fn default_mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

fn settings(
    t: &TrainArgs,
    train: &Dataset,
    trace_limit: Option<usize>,
) -> Result<RunSettings, CliError> {
    let layers = match (&t.model, t.dataset) {
        (Some(l), _) => l.0.clone(),
        (None, DatasetKind::Mnist) => MNIST_DIMS.to_vec(),
        (None, DatasetKind::Blobs) => vec![DEFAULT_BLOBS_HIDDEN, train.classes],
    };
    model_dims(&layers, train).map_err(usage)?;
    if t.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let cfg = TrainConfig {
        lr: t.lr,
        momentum: t.momentum,
        weight_decay: t.weight_decay,
        batch_size: t.batch,
        epochs: t.epochs,
        clip_norm: t.clip_norm,
        seed: t.seed,
        lr_drops: Vec::new(),
        trace_limit,
    };
    cfg.validate().map_err(usage)?;
    if cfg.batch_size > train.len() {
        return Err(usage(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch_size,
            train.len()
        )));
    }
    let stability = match t.fixed_shift {
        Some(u) if u.is_finite() => Stability::FixedShift(u),
        Some(u) => return Err(usage(format!("--fixed-shift must be finite, got {u}"))),
        None => Stability::MaxShift,
    };
    Ok(RunSettings {
        layers,
        train: cfg,
        tau: t.tau,
        stability,
        bins: t.bins,
    })
}

/// The warm-up run requested by `--warmup-iters`, if any.
fn warmup_kind(t: &TrainArgs) -> Result<Option<RunKind>, CliError> {
    let Some(iters) = t.warmup_iters else {
        if t.beta_initial.is_some() || t.beta_end.is_some() {
            return Err(usage("--beta-initial/--beta-end need --warmup-iters"));
        }
        return Ok(None);
    };
    let schedule = WarmupSchedule::new(
        t.beta_initial.unwrap_or(0.1),
        t.beta_end.unwrap_or(1.0),
        iters,
        t.warmup_granularity,
    )
    .map_err(usage)?;
    Ok(Some(RunKind::Warmup(schedule)))
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let betas = match (a.beta, a.betas) {
        (Some(b), _) => vec![b],
        (None, Some(list)) => list.0,
        (None, None) => vec![1.0],
    };
    let mut kinds: Vec<RunKind> = betas.into_iter().map(RunKind::Fixed).collect();
    kinds.extend(warmup_kind(&a.train)?);
    let (train, test) = load_data(&a.train)?;
    let settings = settings(&a.train, &train, Some(0))?;

    let results = run_sweep(&kinds, &settings, &train, &test);

    fs::create_dir_all(&a.out)?;
    let mut table = format!("{SWEEP_HEADER}\n");
    for (kind, result) in kinds.iter().zip(&results) {
        let row = sweep_row(*kind, result);
        writeln!(out, "{row}")?;
        table.push_str(&row);
        table.push('\n');
        if let Ok(r) = result {
            write_run_dir(&a.out.join(kind.label()), r, &test)?;
        }
    }
    fs::write(a.out.join("sweep.csv"), table)?;
    Ok(EXIT_OK)
}

fn cmd_trace(a: TraceArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let kind = warmup_kind(&a.train)?.unwrap_or(RunKind::Fixed(a.beta));
    let (train, _test) = load_data(&a.train)?;
    let limit = a.trace_limit.unwrap_or(DEFAULT_TRACE_CAP).min(train.len());
    if a.groups == 0 || a.groups > limit {
        return Err(usage(format!(
            "--groups must be between 1 and the {limit} traced samples"
        )));
    }
    let s = settings(&a.train, &train, Some(limit))?;
    let dims = model_dims(&s.layers, &train).map_err(usage)?;
    let model = MlpModel::new(&dims, s.train.seed).map_err(failure)?;
    let source = kind.source(s.tau, s.stability).map_err(usage)?;
    let outcome = trainer::train(model, &train, None, &s.train, &source).map_err(failure)?;
    let groups = trainer::difficulty_groups(&outcome.traces, a.groups).map_err(failure)?;

    fs::create_dir_all(&a.out)?;
    let mut buf = Vec::new();
    trainer::write_epoch_metrics_csv(&mut buf, &outcome.epochs)?;
    fs::write(a.out.join("epochs.csv"), &buf)?;
    buf.clear();
    trainer::write_trace_csv(&mut buf, &outcome.traces, Some(&groups))?;
    fs::write(a.out.join("trace.csv"), &buf)?;
    buf.clear();
    trainer::write_group_csv(&mut buf, &groups)?;
    fs::write(a.out.join("groups.csv"), &buf)?;

    let last = outcome.epochs.len();
    writeln!(
        out,
        "{}: {} samples in {} groups, spread after epoch {last} = {}",
        kind.label(),
        outcome.traces.len(),
        groups.k,
        groups.spread_at(last)
    )?;
    Ok(EXIT_OK)
}

fn cmd_calib(a: CalibArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let text = fs::read_to_string(&a.logits)
        .map_err(|e| failure(format!("{}: {e}", a.logits.display())))?;
    let (logits, labels) = calibration::parse_logits_csv(&text)
        .map_err(|e| failure(format!("{}: {e}", a.logits.display())))?;
    let (report, cal) =
        RunReport::from_logits(a.beta, &logits, &labels, a.tau, a.bins).map_err(failure)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("reliability.csv"), cal.reliability_csv())?;
    fs::write(a.out.join("report.json"), to_json(&report) + "\n")?;
    writeln!(
        out,
        "ece={} mce={} accuracy={} temperature={}",
        report.ece, report.mce, report.accuracy, report.temperature
    )?;
    Ok(EXIT_OK)
}

/// Sample points of the warm-up table: tenths of the warm-up length, then
/// twice the length to show the clamp.
pub fn warmup_points(t_warm: u64) -> Vec<u64> {
    let mut ts: Vec<u64> = (0..=10).map(|k| k * t_warm / 10).collect();
    ts.push(2 * t_warm);
    ts.dedup();
    ts
}

fn cmd_warmup_demo(a: WarmupArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let s = WarmupSchedule::new(
        a.beta_initial,
        a.beta_end,
        a.warmup_iters,
        a.warmup_granularity,
    )
    .map_err(usage)?;
    writeln!(out, "t,beta")?;
    for t in warmup_points(s.t_warm()) {
        writeln!(out, "{t},{}", s.beta_at(t))?;
    }
    Ok(EXIT_OK)
}
