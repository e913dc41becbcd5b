//! Command-line surface over `fairgse-core`: entropy reports, the gradient
//! oracle, synthetic data, training runs and multi-seed experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod table;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fairgse_core::data::{load_structure, write_dataset, DataError, SynthSpec};
use fairgse_core::entropy::entropy_of;
use fairgse_core::fairness::{fpr_bound, sp_eo_bound};
use fairgse_core::training::TrainConfig;

use crate::config::{default_out_root, load_file, DataSource, RunConfig};
use crate::experiment::{metrics_row, run_experiment, train_run, ExperimentSpec, METRIC_COLUMNS};
use crate::gradcheck::{run_gradcheck, GradcheckOptions};
use crate::table::{Format, Table};

/// Bad arguments or config; the binary exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A check ran to completion and failed; exit status 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// 2 for usage errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairgse", version, about = "Fair node classification via structural entropy maximization")]
pub struct Cli {
    /// Output format for tables printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// 2D-SE of a graph under its sensitive partition, with the fairness bounds.
    Entropy(EntropyArgs),
    /// Compare the analytic entropy gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic biased graph and write it to disk.
    Synth(SynthArgs),
    /// Train one model and write a run directory.
    Train(TrainArgs),
    /// Train several variants over several seeds and aggregate.
    Experiment(ExperimentArgs),
    /// Print the metrics stored in a run or experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Edge list with one `i j w` per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Node CSV with a header row.
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub sensitive_column: String,
    /// Raw sensitive values above this count as group 1.
    #[arg(long)]
    pub sensitive_threshold: Option<f64>,
    /// Binary label column; enables the FPR bound.
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON or TOML); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON or TOML); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; the default synthetic graph when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; `$FAIRGSE_OUT` or `runs` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment spec (JSON or TOML); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the first seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A directory written by `train` or `experiment`.
    pub dir: PathBuf,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let format = cli.format;
    match &cli.command {
        Command::Entropy(a) => cmd_entropy(a, format, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, format, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, format, out),
        Command::Experiment(a) => cmd_experiment(a, format, out),
        Command::Report(a) => cmd_report(a, format, out),
    }
}

fn cmd_entropy(a: &EntropyArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    let g = load_structure(&a.edges, &a.nodes, &a.sensitive_column, a.sensitive_threshold, a.label_column.as_deref())
        .map_err(|e| match e {
        DataError::MissingColumn { .. } => anyhow::Error::new(UsageError(e.to_string())),
        e => e.into(),
    })?;
    let r = entropy_of(&g)?;
    let mut header = vec!["h", "intra", "inter", "h_max", "gap", "sp_eo_bound"];
    let mut row = vec![
        r.h.to_string(),
        r.intra_term.to_string(),
        r.inter_term.to_string(),
        r.h_max.to_string(),
        r.gap.to_string(),
        sp_eo_bound(r.gap)?.to_string(),
    ];
    if a.label_column.is_some() {
        header.push("fpr_bound");
        row.push(fpr_bound(r.gap, g.negative_ratio())?.to_string());
    }
    let mut t = Table::new(header);
    t.push(row);
    write!(out, "{}", t.render(format))?;
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    if a.trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }
    if !(a.eps > 0.0) || !(a.tolerance > 0.0) {
        return Err(UsageError("--eps and --tolerance must be positive".into()).into());
    }
    let report = run_gradcheck(&GradcheckOptions {
        seed: a.seed,
        trials: a.trials,
        eps: a.eps,
        tolerance: a.tolerance,
        flip_sign: false,
    })?;
    write!(out, "{}", report.table().render(format))?;
    if report.passed {
        Ok(())
    } else {
        Err(CheckFailed(format!("max relative error {:.3e} exceeds {:.1e}", report.max_rel_err, a.tolerance)).into())
    }
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec: SynthSpec = match &a.config {
        Some(p) => load_file(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let g = DataSource::Synthetic(spec).load()?;
    let dir = a.out.clone().unwrap_or_else(|| default_out_root().join("synth"));
    let manifest = write_dataset(&g, &dir, &a.name)?;
    writeln!(out, "{}", manifest.display())?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    let mut train: TrainConfig = match &a.config {
        Some(p) => load_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        train.seed = seed;
    }
    train.validate().map_err(|e| UsageError(e.to_string()))?;
    let data = match &a.data {
        Some(p) => DataSource::Manifest(p.clone()),
        None => DataSource::default(),
    };
    let root = a.out.clone().unwrap_or_else(default_out_root);
    let cfg = RunConfig { data, train };
    let outcome = train_run(&cfg, &root)?;
    let mut t = Table::new(METRIC_COLUMNS);
    t.push(metrics_row(&outcome.config_hash, cfg.train.ablation.as_str(), cfg.train.seed, &outcome.report));
    write!(out, "{}", t.render(format))?;
    if format == Format::Text {
        writeln!(out, "run directory: {}", outcome.dir.display())?;
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    let mut spec: ExperimentSpec = match &a.config {
        Some(p) => load_file(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.first_seed = seed;
    }
    let root = a.out.clone().unwrap_or_else(default_out_root);
    let outcome = run_experiment(&spec, &root)?;
    write!(out, "{}", outcome.summary.render(format))?;
    if format == Format::Text {
        writeln!(out, "experiment directory: {}", outcome.dir.display())?;
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    let path = ["summary.csv", "metrics.csv"]
        .iter()
        .map(|f| a.dir.join(f))
        .find(|p| p.is_file())
        .ok_or_else(|| UsageError(format!("{} has no summary.csv or metrics.csv", a.dir.display())))?;
    write!(out, "{}", Table::read_csv(&path)?.render(format))?;
    Ok(())
}
