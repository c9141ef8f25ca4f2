//! Adversarial feature augmentation.
//!
//! Every strategy returns parameter gradients for the optimizer to apply;
//! only "free" training interleaves several updates per batch, and the
//! training loop drives those replays.

mod perturb;
mod strategy;

use serde::{Deserialize, Serialize};

pub use perturb::{init_perturbation, normalize_gradient, row_step_sizes, NormMode, PerturbState};
pub use strategy::{
    clean_step, fgsm_step, flag_step, free_step, pgd_step, AscentRecord, Batch, Counters, StepOutput, StepRngs,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Clean,
    Fgsm,
    Pgd,
    Free,
    FreeLb,
    Flag,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Clean,
        StrategyKind::Fgsm,
        StrategyKind::Pgd,
        StrategyKind::Free,
        StrategyKind::FreeLb,
        StrategyKind::Flag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Clean => "clean",
            StrategyKind::Fgsm => "fgsm",
            StrategyKind::Pgd => "pgd",
            StrategyKind::Free => "free",
            StrategyKind::FreeLb => "freelb",
            StrategyKind::Flag => "flag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Ascent steps `M` (replays per batch for free training).
    pub ascent_steps: usize,
    pub alpha_l: f64,
    pub alpha_u: f64,
    /// ℓ∞ budget; PGD requires it, FLAG and FreeLB refuse it.
    pub epsilon: Option<f64>,
    pub norm: NormMode,
}

impl StrategyConfig {
    /// Defaults per strategy: FLAG uses sign steps with `M = 3`, FreeLB the
    /// same loop with Frobenius normalization, PGD and free training `M = 8`
    /// with `ε = M·α`, FGSM a single step.
    pub fn new(kind: StrategyKind, alpha: f64) -> Self {
        let (m, norm) = match kind {
            StrategyKind::Clean | StrategyKind::Fgsm => (1, NormMode::Sign),
            StrategyKind::Pgd | StrategyKind::Free => (8, NormMode::Sign),
            StrategyKind::FreeLb => (3, NormMode::L2Global),
            StrategyKind::Flag => (3, NormMode::Sign),
        };
        let epsilon = matches!(kind, StrategyKind::Pgd | StrategyKind::Free).then(|| m as f64 * alpha);
        StrategyConfig {
            kind,
            ascent_steps: m,
            alpha_l: alpha,
            alpha_u: alpha,
            epsilon,
            norm,
        }
    }

    pub fn clean() -> Self {
        Self::new(StrategyKind::Clean, 0.0)
    }

    pub fn max_alpha(&self) -> f64 {
        self.alpha_l.max(self.alpha_u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ascent_steps == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if !(self.alpha_l >= 0.0 && self.alpha_u >= 0.0) {
            return Err(Error::Config("alpha_l and alpha_u must be non-negative".into()));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return Err(Error::Config("epsilon must be non-negative".into()));
            }
        }
        match self.kind {
            StrategyKind::Flag | StrategyKind::FreeLb if self.epsilon.is_some() => Err(Error::Config(format!(
                "epsilon is not used by {}: the ascent is unbounded",
                self.kind
            ))),
            StrategyKind::Pgd if self.epsilon.is_none() => Err(Error::Config("pgd requires epsilon".into())),
            StrategyKind::Pgd | StrategyKind::Fgsm if self.norm != NormMode::Sign => {
                Err(Error::Config(format!("{} uses sign steps; norm must be sign", self.kind)))
            }
            _ => Ok(()),
        }
    }

    /// Forward passes one epoch of this strategy spends on a full batch.
    pub fn passes_per_epoch(&self) -> usize {
        match self.kind {
            StrategyKind::Clean => 1,
            StrategyKind::Fgsm => 2,
            StrategyKind::Pgd => self.ascent_steps + 1,
            StrategyKind::Free | StrategyKind::FreeLb | StrategyKind::Flag => self.ascent_steps,
        }
    }
}
