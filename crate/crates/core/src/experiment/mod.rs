//! Single runs and sweeps that write their results to disk.
//!
//! Every run directory holds `epochs.csv` (one row per evaluated epoch, six
//! significant digits), `summary.json` (selected epoch, counters and the
//! effective configuration at full precision) and `run.log` (wall-clock
//! time, the only non-deterministic output). Sweeps add `table.csv` at the
//! top of their output directory.

pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Counters;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::train::{train_on, ConfigEntries, Dataset, EpochRecord, RunHistory, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    SweepSeeds,
    CompareStrategies,
    FreeBudget,
    NoiseSweep,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Base configuration with overrides already applied.
    pub config: ConfigEntries,
    /// Seeds to sweep; `None` uses the configured seed alone.
    pub seeds: Option<Vec<u64>>,
    pub sigmas: Vec<f64>,
    pub out: PathBuf,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub epsilon: Option<f64>,
    pub norm: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub epochs_run: usize,
    pub selected: EpochRecord,
    pub counters: Counters,
    pub config: BTreeMap<String, String>,
}

impl RunSummary {
    fn new(cfg: &TrainConfig, history: &RunHistory, sigma: Option<f64>) -> Self {
        let echo = cfg.echo();
        RunSummary {
            strategy: cfg.strategy.kind.to_string(),
            m: cfg.strategy.ascent_steps,
            alpha_l: cfg.strategy.alpha_l,
            alpha_u: cfg.strategy.alpha_u,
            epsilon: cfg.strategy.epsilon,
            norm: echo["norm"].clone(),
            seed: cfg.seed,
            sigma,
            epochs_run: history.epochs_run,
            selected: history.selected,
            counters: history.counters,
            config: echo,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; zero for a
/// single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len();
        if n == 0 {
            return Stats { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stats { mean, std }
    }
}

/// One row of a sweep table: a configuration run over the seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: String,
    pub runs: Vec<RunSummary>,
    pub val_acc: Stats,
    pub test_acc: Stats,
}

impl ArmResult {
    fn new(arm: impl Into<String>, runs: Vec<RunSummary>) -> Self {
        let val: Vec<f64> = runs.iter().map(|r| r.selected.val_acc).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.selected.test_acc).collect();
        ArmResult {
            arm: arm.into(),
            val_acc: Stats::of(&val),
            test_acc: Stats::of(&test),
            runs,
        }
    }

    fn first(&self) -> &RunSummary {
        &self.runs[0]
    }
}

/// Per-σ outcome of the noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub sigma: f64,
    pub clean: ArmResult,
    pub fgsm: ArmResult,
}

impl NoiseRow {
    /// Augmented minus clean mean test accuracy.
    pub fn gap(&self) -> f64 {
        self.fgsm.test_acc.mean - self.clean.test_acc.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentReport {
    Single(RunSummary),
    Arms(Vec<ArmResult>),
    Noise(Vec<NoiseRow>),
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    for &s in &spec.sigmas {
        if !(s >= 0.0) {
            return Err(Error::Config(format!("sigma must be non-negative, got {s}")));
        }
    }
    match spec.kind {
        ExperimentKind::Single => run_single(spec).map(ExperimentReport::Single),
        ExperimentKind::SweepSeeds => run_sweep_seeds(spec).map(|a| ExperimentReport::Arms(vec![a])),
        ExperimentKind::CompareStrategies => run_compare_strategies(spec).map(ExperimentReport::Arms),
        ExperimentKind::FreeBudget => run_free_budget(spec).map(ExperimentReport::Arms),
        ExperimentKind::NoiseSweep => run_noise_sweep(spec).map(ExperimentReport::Noise),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const EPOCHS_HEADER: &str = "epoch,train_loss,train_acc,val_acc,test_acc";

/// Numbers are written in the shortest form that parses back to the same
/// value.
pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut s = format!("{EPOCHS_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.val_acc,
            r.test_acc
        );
    }
    s
}

/// Trains one configuration on an already loaded dataset and writes its run
/// directory.
pub fn run_to_dir(cfg: &TrainConfig, data: &Dataset, dir: &Path, sigma: Option<f64>) -> Result<RunSummary> {
    create_dir(dir)?;
    let start = Instant::now();
    let history = train_on(cfg, data)?;
    let summary = RunSummary::new(cfg, &history, sigma);
    write_file(&dir.join("epochs.csv"), &epochs_csv(&history.records))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), &(json + "\n"))?;
    write_file(
        &dir.join("run.log"),
        &format!("wall_seconds {:.3}\n", start.elapsed().as_secs_f64()),
    )?;
    Ok(summary)
}

pub fn run_single(spec: &ExperimentSpec) -> Result<RunSummary> {
    let cfg = TrainConfig::from_entries(&spec.config)?;
    let data = Dataset::load(&cfg.data)?;
    run_to_dir(&cfg, &data, &spec.out, None)
}

fn seeds_of(spec: &ExperimentSpec) -> Result<Vec<u64>> {
    match &spec.seeds {
        Some(s) if s.is_empty() => Err(Error::Config("empty seed set".into())),
        Some(s) => Ok(s.clone()),
        None => Ok(vec![TrainConfig::from_entries(&spec.config)?.seed]),
    }
}

/// Runs `entries` once per seed into `dir/seed-<s>`, in parallel.
fn run_arm(
    arm: &str,
    entries: &ConfigEntries,
    seeds: &[u64],
    dir: &Path,
    data: &(dyn Fn(u64) -> Result<Dataset> + Sync),
    sigma: Option<f64>,
) -> Result<ArmResult> {
    let base = TrainConfig::from_entries(entries)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..base.clone() };
            let d = data(seed)?;
            run_to_dir(&cfg, &d, &dir.join(format!("seed-{seed}")), sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ArmResult::new(arm, runs))
}

const ARM_HEADER: &str =
    "arm,strategy,M,alpha_l,alpha_u,epochs_run,forwards,runs,val_acc_mean,val_acc_std,test_acc_mean,test_acc_std";

/// Sweep table; `forwards` is the forward count of the first seed's run
/// (identical across seeds for full-batch training).
pub fn arms_csv(arms: &[ArmResult]) -> String {
    let mut s = format!("{ARM_HEADER}\n");
    for a in arms {
        let r = a.first();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            a.arm,
            r.strategy,
            r.m,
            r.alpha_l,
            r.alpha_u,
            r.epochs_run,
            r.counters.forwards,
            a.runs.len(),
            a.val_acc.mean,
            a.val_acc.std,
            a.test_acc.mean,
            a.test_acc.std
        );
    }
    s
}

fn load_base(spec: &ExperimentSpec) -> Result<Dataset> {
    Dataset::load(&TrainConfig::from_entries(&spec.config)?.data)
}

pub fn run_sweep_seeds(spec: &ExperimentSpec) -> Result<ArmResult> {
    let seeds = seeds_of(spec)?;
    let data = load_base(spec)?;
    let cfg = TrainConfig::from_entries(&spec.config)?;
    let arm = run_arm(
        cfg.strategy.kind.name(),
        &spec.config,
        &seeds,
        &spec.out,
        &|_| Ok(data.clone()),
        None,
    )?;
    write_file(&spec.out.join("table.csv"), &arms_csv(std::slice::from_ref(&arm)))?;
    Ok(arm)
}

/// Entries for one strategy arm: strategy-specific keys of the base config
/// are dropped so each strategy starts from its own defaults.
fn arm_entries(base: &ConfigEntries, strategy: &str, m: Option<usize>) -> Result<ConfigEntries> {
    let mut e = base.clone();
    for key in ["strategy", "M", "norm", "epsilon"] {
        e.remove(key);
    }
    e.set("strategy", strategy)?;
    if let Some(m) = m {
        e.set("M", &m.to_string())?;
    }
    Ok(e)
}

/// Strategies and ascent step counts of the comparison table.
pub const COMPARE_ARMS: [(&str, usize); 5] = [("clean", 1), ("pgd", 8), ("free", 8), ("freelb", 3), ("flag", 3)];

pub fn run_compare_strategies(spec: &ExperimentSpec) -> Result<Vec<ArmResult>> {
    let seeds = seeds_of(spec)?;
    let data = load_base(spec)?;
    let mut arms = Vec::new();
    for (name, m) in COMPARE_ARMS {
        let entries = arm_entries(&spec.config, name, (name != "clean").then_some(m))?;
        arms.push(run_arm(name, &entries, &seeds, &spec.out.join(name), &|_| Ok(data.clone()), None)?);
    }
    write_file(&spec.out.join("table.csv"), &arms_csv(&arms))?;
    Ok(arms)
}

/// Arms `clean(N)`, `flag(N)` and `flag(⌈N/M⌉)`. FLAG uses the configured
/// `M` when the base strategy is flag, otherwise 3.
pub fn run_free_budget(spec: &ExperimentSpec) -> Result<Vec<ArmResult>> {
    let seeds = seeds_of(spec)?;
    let data = load_base(spec)?;
    let base = TrainConfig::from_entries(&spec.config)?;
    let m = match base.strategy.kind {
        crate::augment::StrategyKind::Flag => base.strategy.ascent_steps,
        _ => 3,
    };
    let mut clean = arm_entries(&spec.config, "clean", None)?;
    clean.set("free_budget", "false")?;
    let mut flag = arm_entries(&spec.config, "flag", Some(m))?;
    flag.set("free_budget", "false")?;
    let mut flag_free = flag.clone();
    flag_free.set("free_budget", "true")?;

    let mut arms = Vec::new();
    for (name, entries) in [("clean-N", clean), ("flag-N", flag), ("flag-N/M", flag_free)] {
        let dir = spec.out.join(name.replace('/', "-over-"));
        arms.push(run_arm(name, &entries, &seeds, &dir, &|_| Ok(data.clone()), None)?);
    }
    write_file(&spec.out.join("table.csv"), &arms_csv(&arms))?;
    Ok(arms)
}

/// `X + σ·Z` with `Z` standard normal, drawn from the noise stream of `seed`.
pub fn add_gaussian_noise(x: &crate::Matrix, sigma: f64, seed: u64) -> crate::Matrix {
    if sigma == 0.0 {
        return x.clone();
    }
    let mut rng = stream(seed, Stream::Noise);
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    out
}

const NOISE_HEADER: &str = "sigma,runs,clean_mean,clean_std,fgsm_mean,fgsm_std,gap";

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut s = format!("{NOISE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.sigma,
            r.clean.runs.len(),
            r.clean.test_acc.mean,
            r.clean.test_acc.std,
            r.fgsm.test_acc.mean,
            r.fgsm.test_acc.std,
            r.gap()
        );
    }
    s
}

/// Clean and FGSM arms at every σ. Each seed perturbs the features once
/// before training and both arms see the same noisy features.
pub fn run_noise_sweep(spec: &ExperimentSpec) -> Result<Vec<NoiseRow>> {
    if spec.sigmas.is_empty() {
        return Err(Error::Config("noise sweep needs at least one sigma".into()));
    }
    let seeds = seeds_of(spec)?;
    let base = match load_base(spec)? {
        Dataset::Node(d) => d,
        Dataset::Graph(_) => return Err(Error::Config("noise sweep needs a node dataset".into())),
    };
    let clean = arm_entries(&spec.config, "clean", None)?;
    let fgsm = arm_entries(&spec.config, "fgsm", None)?;
    let mut rows = Vec::new();
    for &sigma in &spec.sigmas {
        let dir = spec.out.join(format!("sigma-{sigma}"));
        let noisy = |seed: u64| {
            Ok(Dataset::Node(
                base.with_features(add_gaussian_noise(base.features(), sigma, seed))?,
            ))
        };
        let c = run_arm("clean", &clean, &seeds, &dir.join("clean"), &noisy, Some(sigma))?;
        let f = run_arm("fgsm", &fgsm, &seeds, &dir.join("fgsm"), &noisy, Some(sigma))?;
        rows.push(NoiseRow { sigma, clean: c, fgsm: f });
    }
    write_file(&spec.out.join("table.csv"), &noise_csv(&rows))?;
    Ok(rows)
}
