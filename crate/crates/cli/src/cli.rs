//! Argument definitions and command implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hadanet::gradcheck::{check_with_variant, GradCheckReport, GradTarget};
use hadanet::thresholding::ThresholdVariant;
use hadanet::wht::{self, TransformPlan};
use hadanet::Tensor64;
use hadanet_train::{evaluate, load_checkpoint, load_idx, save_checkpoint, train, Dataset, Model, ModelKind, ModelSpec, TrainConfig};

use crate::bench::{bench_channel_mixers, scaling_sweep, to_csv, to_json, BenchConfig, Mixer};
use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "HADANET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hadanet", version, about = "Walsh-Hadamard channel mixing and multiplication-free convolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time dense 1×1 convolution, naive WHT and FWHT channel mixers.
    Bench(BenchArgs),
    /// Compare analytic gradients with central finite differences.
    CheckGrad(CheckGradArgs),
    /// Print the transform of a vector, or the transform matrix.
    Transform(TransformArgs),
    /// Train a toy network on IDX data.
    Train(TrainArgs),
    /// Evaluate a checkpoint on IDX data.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub h: usize,
    #[arg(long, default_value_t = 32)]
    pub w: usize,
    /// Channel count; must be a power of two.
    #[arg(long, default_value_t = 1024)]
    pub c: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Seed of the random input tensor and dense weights.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated channel counts; replaces `--c` with a scaling sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckGradArgs {
    /// One of smooth, weighted, fwht-expand, fwht-project, mf-conv, batch-norm, bottleneck.
    pub target: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-entry tolerance on |analytic − numeric| / max(1, |numeric|); defaults per target.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Threshold variant for the layer targets.
    #[arg(long, default_value = "smooth")]
    pub variant: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Natural,
    Sequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    None,
    Orthonormal,
    Inverse,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Comma- or space-separated values, or a file containing them.
    #[arg(allow_hyphen_values = true)]
    pub input: Option<String>,
    #[arg(long)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = OrderingArg::Natural)]
    pub ordering: OrderingArg,
    #[arg(long, value_enum, default_value_t = ScaleArg::None)]
    pub scale: ScaleArg,
    /// Print the ±1 transform matrix instead.
    #[arg(long)]
    pub matrix: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data_images: PathBuf,
    #[arg(long)]
    pub data_labels: PathBuf,
    /// Keep the first N images of every class.
    #[arg(long)]
    pub subset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out images evaluated after every epoch.
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    #[arg(long, default_value = "toy-fwht")]
    pub model: String,
    #[arg(long, default_value = "smooth")]
    pub threshold: String,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Save the trained model as `PATH.manifest` and `PATH.bin`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write the per-epoch JSON lines here instead of standard output.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 250)]
    pub batch: usize,
}

/// Sizes the global worker pool from [`THREADS_ENV`]; unset or 0 keeps the default.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    if n > 0 {
        // A pool built earlier in the process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn write_out(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("standard output: {e}")))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Bench(a) => cmd_bench(&a, out),
        Command::CheckGrad(a) => cmd_check_grad(&a, out),
        Command::Transform(a) => cmd_transform(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
    }
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = BenchConfig {
        n: a.n,
        h: a.h,
        w: a.w,
        c: a.c,
        reps: a.reps,
        warmup: a.warmup,
        seed: a.seed,
    };
    let reports = match &a.sweep {
        Some(sizes) if sizes.is_empty() => return Err(CliError::Usage("--sweep needs at least one size".into())),
        Some(sizes) => scaling_sweep(&cfg, sizes, &Mixer::ALL)?,
        None => bench_channel_mixers(&cfg)?,
    };
    let text = match a.format {
        Format::Json => to_json(&reports) + "\n",
        Format::Csv => to_csv(&reports),
    };
    match &a.out {
        Some(path) => write_file(path, &text),
        None => write_out(out, &text),
    }
}

fn parse_variant(name: &str) -> CliResult<ThresholdVariant> {
    ThresholdVariant::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = ThresholdVariant::ALL.iter().map(|v| v.name()).collect();
        CliError::Usage(format!("unknown threshold `{name}` (expected one of {})", known.join(", ")))
    })
}

pub fn format_grad_report(r: &GradCheckReport) -> String {
    let mut s = format!(
        "check-grad {} variant={} tol={:e} case: {}\n",
        r.target.name(),
        r.variant.name(),
        r.tolerance,
        r.case
    );
    s += &format!("{:<24} {:>7} {:>12} {:>12} {:>6}\n", "group", "entries", "max_abs", "max_rel", "fail");
    for g in &r.groups {
        s += &format!(
            "{:<24} {:>7} {:>12.3e} {:>12.3e} {:>6}\n",
            g.name, g.count, g.max_abs, g.max_rel, g.failures
        );
    }
    s += if r.passed() { "PASS\n" } else { "FAIL\n" };
    s
}

pub fn cmd_check_grad(a: &CheckGradArgs, out: &mut dyn Write) -> CliResult<()> {
    let target = GradTarget::from_name(&a.target).ok_or_else(|| {
        let known: Vec<&str> = GradTarget::ALL.iter().map(|t| t.name()).collect();
        CliError::Usage(format!("unknown target `{}` (expected one of {})", a.target, known.join(", ")))
    })?;
    let variant = parse_variant(&a.variant)?;
    let tol = a.tol.unwrap_or_else(|| target.default_tolerance());
    let report = check_with_variant(target, variant, a.seed, tol)?;
    write_out(out, &format_grad_report(&report))?;
    if report.passed() {
        Ok(())
    } else {
        let failed = report.groups.iter().filter(|g| !g.passed()).count();
        Err(CliError::Check(format!(
            "{} gradients: {failed} of {} groups exceed tol {tol:e} (max rel {:.3e})",
            target.name(),
            report.groups.len(),
            report.max_rel()
        )))
    }
}

/// Values separated by commas or whitespace.
pub fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("`{t}` is not a number"))))
        .collect()
}

fn join(values: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> CliResult<()> {
    let ordering = match a.ordering {
        OrderingArg::Natural => wht::Ordering::Natural,
        OrderingArg::Sequency => wht::Ordering::Sequency,
    };
    let scaling = match a.scale {
        ScaleArg::None => wht::Scaling::None,
        ScaleArg::Orthonormal => wht::Scaling::Orthonormal,
        ScaleArg::Inverse => wht::Scaling::Inverse,
    };
    let plan = TransformPlan::new(a.size, ordering, scaling)?;
    if a.matrix {
        if a.input.is_some() {
            return Err(CliError::Usage("--matrix takes no input vector".into()));
        }
        let text: String = plan.matrix().rows().map(|row| join(row.iter()) + "\n").collect();
        return write_out(out, &text);
    }
    let raw = a
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("transform needs an input vector or --matrix".into()))?;
    let path = Path::new(raw);
    let text = if path.is_file() {
        fs::read_to_string(path).map_err(|e| CliError::io(path, e))?
    } else {
        raw.to_string()
    };
    let values = parse_values(&text)?;
    if values.len() != a.size {
        return Err(CliError::Usage(format!(
            "input has {} values but --size is {}",
            values.len(),
            a.size
        )));
    }
    let y = wht::fwht(&Tensor64::vector(&values)?, &plan)?;
    write_out(out, &(join(y.data()) + "\n"))
}

fn load_data(d: &DataArgs) -> CliResult<Dataset> {
    let data = load_idx(&d.data_images, &d.data_labels)?;
    Ok(match d.subset {
        Some(0) => return Err(CliError::Usage("--subset must be positive".into())),
        Some(n) => data.subset_per_class(n),
        None => data,
    })
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let kind = ModelKind::from_name(&a.model)
        .ok_or_else(|| CliError::Usage(format!("unknown model `{}` (expected toy-fwht or toy-conv)", a.model)))?;
    let variant = parse_variant(&a.threshold)?;
    if a.epochs == 0 {
        return Err(CliError::Usage("--epochs must be positive".into()));
    }
    let cfg = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        batch: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let data = load_data(&a.data)?;
    let test = match (&a.test_images, &a.test_labels) {
        (Some(i), Some(l)) => Some(load_idx(i, l)?),
        _ => None,
    };
    let mut model = Model::<f32>::new(ModelSpec::toy(kind, variant), a.seed)?;
    let mut lines = String::new();
    let mut failure = None;
    let history = train(&mut model, &data, test.as_ref(), &cfg, |e| {
        let line = serde_json::to_string(e).expect("records serialize") + "\n";
        if a.history.is_some() {
            lines += &line;
        } else if failure.is_none() {
            failure = write_out(out, &line).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(path) = &a.history {
        write_file(path, &lines)?;
    }
    if let Some(path) = &a.checkpoint {
        save_checkpoint(&model, path)?;
    }
    eprintln!(
        "trained {} ({}) with {} parameters: best test accuracy {}, final {}",
        kind.name(),
        variant.name(),
        model.param_count(),
        history.best_test_accuracy().map_or("n/a".into(), |v| format!("{v:.4}")),
        history.final_test_accuracy().map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.batch == 0 {
        return Err(CliError::Usage("--batch must be positive".into()));
    }
    let model = load_checkpoint(&a.checkpoint)?;
    let data = load_data(&a.data)?;
    let accuracy = evaluate(&model, &data, a.batch)?;
    let line = serde_json::json!({ "accuracy": accuracy, "samples": data.len() });
    write_out(out, &format!("{line}\n"))
}
