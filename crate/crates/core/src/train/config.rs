//! `key = value` configuration files.
//!
//! Lines are `key = value`; `[section]` headers group keys but every key is
//! unique across sections, so `--set M=3` and `--set strategy.M=3` are the
//! same override. `#` starts a comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optimizer::OptimizerKind;
use crate::augment::{NormMode, StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::nn::ReadoutMode;

const SECTIONS: &[(&str, &[&str])] = &[
    ("data", &["edges", "features", "labels", "split", "graphs", "row_normalize"]),
    ("model", &["arch", "hidden", "dropout", "readout", "embed_dim"]),
    ("strategy", &["strategy", "M", "alpha_l", "alpha_u", "epsilon", "norm"]),
    ("optimizer", &["optimizer", "lr", "beta1", "beta2", "eps_hat", "weight_decay"]),
    ("train", &["epochs", "seed", "free_budget", "eval_every"]),
];

fn canonical_key(key: &str) -> Result<&'static str> {
    let (section, bare) = match key.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, key),
    };
    for (name, keys) in SECTIONS {
        if section.is_some_and(|s| s != *name) {
            continue;
        }
        if let Some(k) = keys.iter().find(|k| **k == bare) {
            return Ok(k);
        }
    }
    Err(Error::Config(format!("unknown key {key:?}")))
}

/// Raw key/value pairs, last assignment wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries {
    values: BTreeMap<&'static str, String>,
    base_dir: PathBuf,
}

impl ConfigEntries {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = ConfigEntries {
            values: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if !SECTIONS.iter().any(|(s, _)| *s == name.trim()) {
                    return Err(Error::Config(format!("line {}: unknown section [{name}]", i + 1)));
                }
                continue;
            }
            entries
                .set_pair(line)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, dir)
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key)?;
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) {
        self.values.remove(key);
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base_dir.join(v))
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub split: Option<PathBuf>,
    /// Graph-classification dataset file; excludes the node-level keys.
    pub graphs: Option<PathBuf>,
    /// Scale every feature row to sum to one at load time.
    pub row_normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Gcn,
    Mlp,
    GraphGcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub readout: ReadoutMode,
    pub embed_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            arch: Arch::Gcn,
            hidden: vec![16],
            dropout: 0.5,
            readout: ReadoutMode::Mean,
            embed_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `N`, before any free-budget division.
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub seed: u64,
    pub strategy: StrategyConfig,
    /// Divide the epoch budget by the passes each epoch costs.
    pub free_budget: bool,
    pub data: DataConfig,
    pub model: ModelSpec,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            optimizer: OptimizerKind::adam_default(),
            weight_decay: 0.0,
            seed: 0,
            strategy: StrategyConfig::clean(),
            free_budget: false,
            data: DataConfig::default(),
            model: ModelSpec::default(),
            eval_every: 1,
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 1e-3;

impl TrainConfig {
    pub fn from_entries(e: &ConfigEntries) -> Result<Self> {
        let d = TrainConfig::default();

        let kind = match e.get("strategy") {
            None => StrategyKind::Clean,
            Some(s) => StrategyKind::parse(s).ok_or_else(|| Error::Config(format!("strategy: unknown {s:?}")))?,
        };
        let alpha_l = e.parsed("alpha_l")?.unwrap_or(DEFAULT_ALPHA);
        let mut strategy = StrategyConfig::new(kind, alpha_l);
        strategy.alpha_u = e.parsed("alpha_u")?.unwrap_or(alpha_l);
        if let Some(m) = e.parsed::<usize>("M")? {
            strategy.ascent_steps = m;
        }
        if let Some(norm) = e.get("norm") {
            strategy.norm = match norm {
                "sign" => NormMode::Sign,
                "l2" => NormMode::L2Global,
                other => return Err(Error::Config(format!("norm: expected sign or l2, got {other:?}"))),
            };
        }
        strategy.epsilon = match e.get("epsilon") {
            Some("none") => None,
            Some(_) => e.parsed("epsilon")?,
            // unset budgets follow M and α, whichever of them was overridden
            None => strategy.epsilon.map(|_| strategy.ascent_steps as f64 * strategy.max_alpha()),
        };
        strategy.validate()?;

        let optimizer = match e.get("optimizer").unwrap_or("adam") {
            "sgd" => OptimizerKind::Sgd,
            "adam" => {
                let OptimizerKind::Adam { beta1, beta2, eps_hat } = OptimizerKind::adam_default() else {
                    unreachable!()
                };
                OptimizerKind::Adam {
                    beta1: e.parsed("beta1")?.unwrap_or(beta1),
                    beta2: e.parsed("beta2")?.unwrap_or(beta2),
                    eps_hat: e.parsed("eps_hat")?.unwrap_or(eps_hat),
                }
            }
            other => return Err(Error::Config(format!("optimizer: expected sgd or adam, got {other:?}"))),
        };

        let arch = match e.get("arch").unwrap_or("gcn") {
            "gcn" => Arch::Gcn,
            "mlp" => Arch::Mlp,
            "graph-gcn" => Arch::GraphGcn,
            other => return Err(Error::Config(format!("arch: expected gcn, mlp or graph-gcn, got {other:?}"))),
        };
        let hidden = match e.get("hidden") {
            None => d.model.hidden.clone(),
            Some("") | Some("none") => Vec::new(),
            Some(v) => v
                .split(',')
                .map(|h| {
                    h.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&h| h > 0)
                        .ok_or_else(|| Error::Config(format!("hidden: bad width {h:?}")))
                })
                .collect::<Result<_>>()?,
        };
        let readout = match e.get("readout").unwrap_or("mean") {
            "mean" => ReadoutMode::Mean,
            "sum" => ReadoutMode::Sum,
            other => return Err(Error::Config(format!("readout: expected mean or sum, got {other:?}"))),
        };
        let model = ModelSpec {
            arch,
            hidden,
            dropout: e.parsed("dropout")?.unwrap_or(d.model.dropout),
            readout,
            embed_dim: e.parsed("embed_dim")?.unwrap_or(d.model.embed_dim),
        };

        let data = DataConfig {
            edges: e.path("edges"),
            features: e.path("features"),
            labels: e.path("labels"),
            split: e.path("split"),
            graphs: e.path("graphs"),
            row_normalize: e
                .get("row_normalize")
                .map(|v| parse_bool("row_normalize", v))
                .transpose()?
                .unwrap_or(false),
        };

        let cfg = TrainConfig {
            epochs: e.parsed("epochs")?.unwrap_or(d.epochs),
            lr: e.parsed("lr")?.unwrap_or(d.lr),
            optimizer,
            weight_decay: e.parsed("weight_decay")?.unwrap_or(d.weight_decay),
            seed: e.parsed("seed")?.unwrap_or(d.seed),
            strategy,
            free_budget: e
                .get("free_budget")
                .map(|v| parse_bool("free_budget", v))
                .transpose()?
                .unwrap_or(false),
            data,
            model,
            eval_every: e.parsed("eval_every")?.unwrap_or(d.eval_every),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        self.strategy.validate()
    }

    /// Epochs actually run: `N`, or `⌈N / passes⌉` under the free budget,
    /// where `passes` is the forward count of one epoch of the strategy.
    pub fn effective_epochs(&self) -> usize {
        if self.free_budget {
            self.epochs.div_ceil(self.strategy.passes_per_epoch())
        } else {
            self.epochs
        }
    }

    /// Flat `key → value` view of the effective settings, for echoing into
    /// run summaries.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let s = &self.strategy;
        put("strategy", s.kind.to_string());
        put("M", s.ascent_steps.to_string());
        put("alpha_l", s.alpha_l.to_string());
        put("alpha_u", s.alpha_u.to_string());
        put("epsilon", s.epsilon.map_or("none".into(), |e| e.to_string()));
        put(
            "norm",
            match s.norm {
                NormMode::Sign => "sign".into(),
                NormMode::L2Global => "l2".into(),
            },
        );
        match self.optimizer {
            OptimizerKind::Sgd => put("optimizer", "sgd".into()),
            OptimizerKind::Adam { beta1, beta2, eps_hat } => {
                put("optimizer", "adam".into());
                put("beta1", beta1.to_string());
                put("beta2", beta2.to_string());
                put("eps_hat", eps_hat.to_string());
            }
        }
        put("lr", self.lr.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        put("free_budget", self.free_budget.to_string());
        put("eval_every", self.eval_every.to_string());
        put(
            "arch",
            match self.model.arch {
                Arch::Gcn => "gcn",
                Arch::Mlp => "mlp",
                Arch::GraphGcn => "graph-gcn",
            }
            .into(),
        );
        put(
            "hidden",
            self.model
                .hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("dropout", self.model.dropout.to_string());
        put(
            "readout",
            match self.model.readout {
                ReadoutMode::Mean => "mean",
                ReadoutMode::Sum => "sum",
            }
            .into(),
        );
        put("embed_dim", self.model.embed_dim.to_string());
        put("row_normalize", self.data.row_normalize.to_string());
        for (k, p) in [
            ("edges", &self.data.edges),
            ("features", &self.data.features),
            ("labels", &self.data.labels),
            ("split", &self.data.split),
            ("graphs", &self.data.graphs),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        m
    }
}
