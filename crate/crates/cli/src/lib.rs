//! Command-line front end for the risk toolkit.
//!
//! Every subcommand resolves one [`RunConfig`] from built-in defaults, an
//! optional `--config` JSON file, `--set key=value` overrides and dedicated
//! flags, in that order. Reports echo the resolved config.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error,
//! 3 numerical failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::{json, Value};

use risk_core::RiskError;

pub use config::{resolve, OracleMethod, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] RiskError),
}

fn is_numerical(e: &RiskError) -> bool {
    match e {
        RiskError::NonFiniteLoss { .. } | RiskError::NonFinite(_) => true,
        RiskError::Sweep { source, .. } => is_numerical(source),
        _ => false,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if is_numerical(e) => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "risk", version, about = "Shortcut-robust representation learning on frozen features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic feature dataset with planted directions.
    GenSynth(GenSynthArgs),
    /// Train a model on the id-train split.
    Train(TrainArgs),
    /// Score a saved model on one split.
    Eval(EvalArgs),
    /// Train over a grid of lambda or d values and several seeds.
    Sweep(SweepArgs),
    /// Fit a reference subspace (grid search, IRLS or PCA).
    Oracle(OracleArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; the value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output dataset (`.csv` for CSV, otherwise RSKF).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the planted bases as JSON.
    #[arg(long)]
    planted_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// id-train, id-test or ood (default ood).
    #[arg(long)]
    split: Option<String>,
    /// Planted bases JSON; adds principal-angle alignment to the report.
    #[arg(long)]
    planted: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    features: Option<PathBuf>,
    /// lambda or d.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    features: Option<PathBuf>,
    /// grid, irls or pca.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// Grid step, e.g. `0.1deg` or `0.002rad`.
    #[arg(long)]
    resolution: Option<String>,
    /// Restrict to one split; all rows otherwise.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Default)]
struct Overrides(Vec<(String, Value)>);

impl Overrides {
    fn put<T: serde::Serialize>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.0.push((key.into(), json!(v)));
        }
    }

    fn train(&mut self, t: &TrainFlags) {
        self.put("d", t.d);
        self.put("lambda", t.lambda);
        self.put("epochs", t.epochs);
        self.put("lr", t.lr);
        self.put("batch_size", t.batch_size);
    }
}

fn resolve_args(common: &ConfigArgs, fill: impl FnOnce(&mut Overrides)) -> Result<RunConfig, CliError> {
    let mut o = Overrides::default();
    for s in &common.set {
        o.0.push(config::parse_override(s)?);
    }
    o.put("seed", common.seed);
    fill(&mut o);
    resolve(common.config.as_deref(), &o.0)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::GenSynth(a) => {
            let cfg = resolve_args(&a.common, |o| {
                o.put("out", a.out.clone());
                o.put("planted_out", a.planted_out.clone());
            })?;
            commands::gen_synth(&cfg, out)
        }
        Command::Train(a) => {
            let cfg = resolve_args(&a.common, |o| {
                o.train(&a.train);
                o.put("features", a.features.clone());
                o.put("model_out", a.model_out.clone());
                o.put("report_out", a.report_out.clone());
            })?;
            commands::train(&cfg, out)
        }
        Command::Eval(a) => {
            let cfg = resolve_args(&a.common, |o| {
                o.put("model", a.model.clone());
                o.put("features", a.features.clone());
                o.put("split", a.split.clone());
                o.put("planted", a.planted.clone());
                o.put("report_out", a.report_out.clone());
            })?;
            commands::eval(&cfg, out)
        }
        Command::Sweep(a) => {
            let cfg = resolve_args(&a.common, |o| {
                o.train(&a.train);
                o.put("features", a.features.clone());
                o.put("sweep_param", a.param.clone());
                o.put("sweep_grid", a.grid.clone());
                o.put("n_seeds", a.n_seeds);
                o.put("report_out", a.report_out.clone());
            })?;
            commands::sweep(&cfg, commands::threads_from_env()?, out)
        }
        Command::Oracle(a) => {
            let cfg = resolve_args(&a.common, |o| {
                o.put("features", a.features.clone());
                o.put("method", a.method.clone());
                o.put("d", a.d);
                o.put("resolution", a.resolution.clone());
                o.put("split", a.split.clone());
                o.put("report_out", a.report_out.clone());
            })?;
            commands::oracle(&cfg, out)
        }
        Command::GradCheck(a) => {
            let cfg = resolve_args(&a.common, |o| o.train(&a.train))?;
            commands::grad_check(&cfg, out)
        }
    }
}

fn command() -> clap::Command {
    let table = config::defaults_table();
    Cli::command()
        .after_long_help(table.clone())
        .mut_subcommands(|sub| sub.after_long_help(table.clone()))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return 1;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
