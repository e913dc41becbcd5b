//! Training runs and multi-seed, multi-variant experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use fairgse_core::training::{fit, Ablation, MetricsReport, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, short_hash, write_json, DataSource, RunConfig};
use crate::table::{pct_mean_std, Table};

/// One arm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain GCN: no auxiliary losses, fixed anchor.
    Vanilla,
    Full,
    NoGsl,
    NoCl,
    NoSbm,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Full => "full",
            Variant::NoGsl => "no_gsl",
            Variant::NoCl => "no_cl",
            Variant::NoSbm => "no_sbm",
        }
    }

    /// `base` with this variant's switches and `seed` applied.
    pub fn config(self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let ablation = match self {
            Variant::Vanilla => {
                return TrainConfig { lambda1: 0.0, lambda2: 0.0, ablation: Ablation::NoSbm, seed, ..base.clone() }
            }
            Variant::Full => Ablation::Full,
            Variant::NoGsl => Ablation::NoGsl,
            Variant::NoCl => Ablation::NoCl,
            Variant::NoSbm => Ablation::NoSbm,
        };
        TrainConfig { ablation, seed, ..base.clone() }
    }
}

pub const METRIC_COLUMNS: [&str; 19] = [
    "config_hash",
    "variant",
    "seed",
    "acc",
    "auc",
    "f1",
    "fpr",
    "d_sp",
    "d_eo",
    "h",
    "h_max",
    "delta_h",
    "sp_bound",
    "eo_bound",
    "fpr_bound",
    "r",
    "best_epoch",
    "best_val_acc",
    "fpr_shortcut",
];

pub fn metrics_row(hash: &str, variant: &str, seed: u64, m: &MetricsReport) -> Vec<String> {
    let mut row = vec![hash.to_string(), variant.to_string(), seed.to_string()];
    for v in
        [m.acc, m.auc, m.f1, m.fpr, m.d_sp, m.d_eo, m.h, m.h_max, m.delta_h, m.sp_bound, m.eo_bound, m.fpr_bound, m.r]
    {
        row.push(v.to_string());
    }
    row.push(m.best_epoch.to_string());
    row.push(m.best_val_acc.to_string());
    row.push(m.fpr_shortcut.to_string());
    row
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub config_hash: String,
    pub report: MetricsReport,
}

/// Run `fit` and write `config.json`, `epochs.csv`, `metrics.csv`,
/// `checkpoint.json` and `timing.json` into a directory named after the
/// config hash under `out_root`.
pub fn train_run(cfg: &RunConfig, out_root: &Path) -> Result<TrainOutcome> {
    let hash = config_hash(cfg);
    let g = cfg.data.load()?;
    let start = Instant::now();
    let (state, report) = fit(&g, &cfg.train)?;
    let seconds = start.elapsed().as_secs_f64();

    let dir = out_root.join(format!("train-{}", short_hash(&hash)));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;

    let mut epochs =
        Table::new(["epoch", "task_loss", "cont_loss", "se_loss", "total_loss", "train_acc", "val_acc", "h"]);
    for r in &state.history {
        epochs.push(vec![
            r.epoch.to_string(),
            r.task_loss.to_string(),
            r.cont_loss.to_string(),
            r.se_loss.to_string(),
            r.total_loss.to_string(),
            r.train_acc.to_string(),
            r.val_acc.to_string(),
            r.h.to_string(),
        ]);
    }
    epochs.write_csv(&dir.join("epochs.csv"))?;

    let mut metrics = Table::new(METRIC_COLUMNS);
    metrics.push(metrics_row(&hash, cfg.train.ablation.as_str(), cfg.train.seed, &report));
    metrics.write_csv(&dir.join("metrics.csv"))?;
    write_json(&dir.join("checkpoint.json"), &state.checkpoint(&hash))?;
    write_json(&dir.join("timing.json"), &serde_json::json!({ "config_hash": hash, "seconds": seconds }))?;
    Ok(TrainOutcome { dir, config_hash: hash, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Number of seeds per variant.
    pub seeds: usize,
    pub first_seed: u64,
    pub variants: Vec<Variant>,
    pub data: DataSource,
    /// Base training config; each variant overrides its own switches.
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            seeds: 5,
            first_seed: 0,
            variants: vec![Variant::Vanilla, Variant::Full],
            data: DataSource::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub config_hash: String,
    pub report: MetricsReport,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunRecord>,
    pub summary: Table,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

/// Per variant: mean and population standard deviation of the six table
/// metrics in `mean_{std}` percent form, then medians of ACC, FPR and ΔSP.
pub fn summarize(variants: &[Variant], runs: &[RunRecord]) -> Table {
    let mut t = Table::new([
        "variant",
        "runs",
        "acc",
        "auc",
        "f1",
        "fpr",
        "d_sp",
        "d_eo",
        "delta_h",
        "median_acc",
        "median_fpr",
        "median_d_sp",
    ]);
    for &v in variants {
        let reports: Vec<&MetricsReport> = runs.iter().filter(|r| r.variant == v).map(|r| &r.report).collect();
        if reports.is_empty() {
            continue;
        }
        let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).collect::<Vec<_>>();
        let mut row = vec![v.as_str().to_string(), reports.len().to_string()];
        for f in [
            (|r: &MetricsReport| r.acc) as fn(&MetricsReport) -> f64,
            |r| r.auc,
            |r| r.f1,
            |r| r.fpr,
            |r| r.d_sp,
            |r| r.d_eo,
        ] {
            let (m, s) = mean_std(&col(f));
            row.push(pct_mean_std(m, s));
        }
        row.push(format!("{:.4}", mean_std(&col(|r| r.delta_h)).0));
        for f in [(|r: &MetricsReport| r.acc) as fn(&MetricsReport) -> f64, |r| r.fpr, |r| r.d_sp] {
            row.push(format!("{:.2}", 100.0 * median(&col(f))));
        }
        t.push(row);
    }
    t
}

/// Every (variant, seed) pair is trained independently; `runs.csv` and
/// `summary.csv` are written in variant-then-seed order.
pub fn run_experiment(spec: &ExperimentSpec, out_root: &Path) -> Result<ExperimentOutcome> {
    if spec.seeds == 0 || spec.variants.is_empty() {
        return Err(crate::UsageError("an experiment needs at least one seed and one variant".into()).into());
    }
    let g = spec.data.load()?;
    let jobs: Vec<(Variant, u64)> =
        spec.variants.iter().flat_map(|&v| (0..spec.seeds as u64).map(move |k| (v, spec.first_seed + k))).collect();
    for &(v, seed) in &jobs {
        v.config(&spec.train, seed).validate().map_err(|e| crate::UsageError(e.to_string()))?;
    }
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let train = variant.config(&spec.train, seed);
            let hash = config_hash(&RunConfig { data: spec.data.clone(), train: train.clone() });
            let start = Instant::now();
            let (_, report) = fit(&g, &train).with_context(|| format!("variant {} seed {seed}", variant.as_str()))?;
            log::info!("{} seed {seed} done", variant.as_str());
            Ok(RunRecord { variant, seed, config_hash: hash, report, seconds: start.elapsed().as_secs_f64() })
        })
        .collect::<Result<_>>()?;

    let hash = config_hash(spec);
    let dir = out_root.join(format!("experiment-{}-{}", spec.name, short_hash(&hash)));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), spec)?;
    let mut table = Table::new(METRIC_COLUMNS);
    for r in &runs {
        table.push(metrics_row(&r.config_hash, r.variant.as_str(), r.seed, &r.report));
    }
    table.write_csv(&dir.join("runs.csv"))?;
    let summary = summarize(&spec.variants, &runs);
    summary.write_csv(&dir.join("summary.csv"))?;
    let timing: Vec<_> =
        runs.iter().map(|r| serde_json::json!({ "config_hash": r.config_hash, "seconds": r.seconds })).collect();
    write_json(&dir.join("timing.json"), &timing)?;
    Ok(ExperimentOutcome { dir, runs, summary })
}
