//! Subcommands of the `hsgppt` binary: data generation, diagnostics,
//! pre-training, prompt tuning and evaluation.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};
use hsgppt::eval::F1Average;
use hsgppt::graph::FeatureTransform;
use hsgppt::prompt::Variant;

use config::Mode;

static QUIET: AtomicBool = AtomicBool::new(false);

/// Summary line on stdout unless `--quiet` was given.
macro_rules! say {
    ($($t:tt)*) => {
        if !$crate::QUIET.load(::std::sync::atomic::Ordering::Relaxed) {
            println!($($t)*);
        }
    };
}

mod commands;
pub mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] hsgppt::Error),
    #[error("numeric check failed: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 3,
            CliError::Lib(e) if e.is_numeric_error() => 3,
            CliError::Lib(e) if e.is_data_error() => 2,
            CliError::Lib(hsgppt::Error::InvalidParameter(_) | hsgppt::Error::UnknownVariant(_)) => 1,
            CliError::Lib(_) => 2,
        }
    }
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "hsgppt", version, about = "Spectral prompt tuning for graph neural networks")]
pub struct Cli {
    /// Suppress the summary printed on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a two-class contextual stochastic block model dataset.
    GenCsbm(GenCsbmArgs),
    /// Homophily, high-frequency area and spectral diagnostics of a dataset.
    Analyze(AnalyzeArgs),
    /// Contrastive pre-training of the filter-bank backbone.
    Pretrain(PretrainArgs),
    /// Prompt tuning on a k-shot split with a frozen backbone.
    Tune(TuneArgs),
    /// Multi-seed transductive or inductive evaluation.
    Eval(EvalArgs),
    /// Reference-filter accuracy across homophily levels.
    Sweep(SweepArgs),
    /// Full model against its simplified variants.
    Ablate(AblateArgs),
    /// Finite-difference check of both training objectives.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Feature preprocessing: none, row_normalize or binarize.
    #[arg(long, value_parser = parse_serde::<FeatureTransform>)]
    transform: Option<FeatureTransform>,
}

#[derive(Debug, Args)]
struct GenCsbmArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    f: Option<usize>,
    /// Expected mean degree.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    dense_limit: Option<usize>,
}

/// Pre-training settings shared by `eval` and `ablate`.
#[derive(Debug, Args)]
struct PretrainFlags {
    /// Filter order C.
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated subset of filter indices k.
    #[arg(long, value_parser = parse_list::<usize>)]
    ks: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct TuneFlags {
    #[arg(long)]
    n_prompt: Option<usize>,
    #[arg(long)]
    tau_inner: Option<f64>,
    #[arg(long)]
    tau_cross: Option<f64>,
    /// Tuning learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Tuning epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    val_every: Option<usize>,
    /// macro or weighted.
    #[arg(long, value_parser = parse_serde::<F1Average>)]
    metric: Option<F1Average>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_parser = parse_list::<usize>)]
    ks: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Pre-trained checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Labeled nodes per class.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[command(flatten)]
    tune: TuneFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Pre-training dataset for inductive mode.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Shared feature dimension in inductive mode.
    #[arg(long)]
    svd_dim: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_parser = parse_list::<u64>)]
    seeds: Option<std::vec::Vec<u64>>,
    #[arg(long)]
    variant: Option<Variant>,
    #[command(flatten)]
    pretrain: PretrainFlags,
    #[command(flatten)]
    tune: TuneFlags,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated homophily levels.
    #[arg(long, value_parser = parse_list::<f64>)]
    h_values: Option<std::vec::Vec<f64>>,
    #[arg(long, value_parser = parse_list::<u64>)]
    seeds: Option<std::vec::Vec<u64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Probe learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Probe epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_list::<u64>)]
    seeds: Option<std::vec::Vec<u64>>,
    #[command(flatten)]
    pretrain: PretrainFlags,
    #[command(flatten)]
    tune: TuneFlags,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    QUIET.store(cli.quiet, Ordering::Relaxed);
    match cli.command {
        Command::GenCsbm(a) => commands::gen_csbm(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Tune(a) => commands::tune(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

/// Parses `args` (program name first) and runs the subcommand in-process.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(cli)
}
