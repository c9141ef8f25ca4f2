use serde::{Deserialize, Serialize};

use super::perturb::{init_perturbation, PerturbState};
use super::{StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::graph::NodeInput;
use crate::linalg::Matrix;
use crate::nn::{softmax_cross_entropy, DropoutMask, Gradients, Model, Mode, Structure};
use crate::rng::SeededRng;

/// Training passes and optimizer steps; evaluation passes are not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub forwards: u64,
    pub backwards: u64,
    pub param_updates: u64,
}

/// Everything one training step sees.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub input: &'a NodeInput,
    pub structure: Structure<'a>,
    /// One label per output row.
    pub labels: &'a [usize],
    /// Output rows that contribute to the loss.
    pub loss_mask: &'a [bool],
    /// Surface rows that take the labeled step size; `None` means all rows
    /// use `alpha_l`.
    pub labeled_rows: Option<&'a [bool]>,
}

/// Independent random streams for dropout masks and perturbation draws.
#[derive(Debug, Clone)]
pub struct StepRngs {
    pub dropout: SeededRng,
    pub perturb: SeededRng,
}

impl StepRngs {
    pub fn from_seed(seed: u64) -> Self {
        use crate::rng::{stream, Stream};
        StepRngs {
            dropout: stream(seed, Stream::Dropout),
            perturb: stream(seed, Stream::Perturb),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Parameter gradient to hand to the optimizer.
    pub grads: Vec<Vec<f64>>,
    pub loss: f64,
    /// Loss at every ascent iterate, in order.
    pub ascent_losses: Vec<f64>,
}

/// Perturbations and dropout masks seen by each ascent iteration.
#[derive(Debug, Clone, Default)]
pub struct AscentRecord {
    pub deltas: Vec<Matrix>,
    pub masks: Vec<Vec<Option<DropoutMask>>>,
    /// `δ_M`, after the last ascent step.
    pub final_delta: Option<Matrix>,
}

struct Pass {
    loss: f64,
    grads: Gradients,
    masks: Vec<Option<DropoutMask>>,
}

/// Training-mode forward, loss and backward at `X + δ`.
fn pass(
    model: &Model,
    batch: &Batch<'_>,
    delta: Option<&Matrix>,
    rng: &mut SeededRng,
    counters: &mut Counters,
    want_input: bool,
) -> Result<Pass> {
    let (logits, mut tape) = model.forward(batch.input, delta, batch.structure, &mut Mode::Train(rng))?;
    counters.forwards += 1;
    let (loss, d_logits) = softmax_cross_entropy(&logits, batch.labels, batch.loss_mask)?;
    let grads = model.backward(&tape, &d_logits, want_input)?;
    counters.backwards += 1;
    Ok(Pass {
        loss,
        grads,
        masks: std::mem::take(&mut tape.masks),
    })
}

fn input_grad(p: &Pass) -> &Matrix {
    p.grads.d_input.as_ref().expect("requested input gradient")
}

fn expect_kind(cfg: &StrategyConfig, allowed: &[StrategyKind], op: &str) -> Result<()> {
    if allowed.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!("{op} called with strategy {}", cfg.kind)))
    }
}

/// Ordinary training step at the unperturbed input.
pub fn clean_step(model: &Model, batch: &Batch<'_>, rngs: &mut StepRngs, counters: &mut Counters) -> Result<StepOutput> {
    let p = pass(model, batch, None, &mut rngs.dropout, counters, false)?;
    Ok(StepOutput {
        grads: p.grads.params,
        loss: p.loss,
        ascent_losses: Vec::new(),
    })
}

/// Multi-step ascent on `δ` with parameter-gradient accumulation.
///
/// Starting from `δ₀ ~ U(-α, α)` (per-row `α`), each of the `M` iterations
/// runs a training-mode forward at `X + δ_{t-1}`, adds `(1/M)·∇_θ L` to the
/// accumulator and moves `δ` along the normalized `∇_δ L`. No projection is
/// applied. The accumulated gradient is returned unapplied; the caller makes
/// exactly one optimizer step with it. With `norm = l2` this is the FreeLB
/// loop.
pub fn flag_step(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &StrategyConfig,
    rngs: &mut StepRngs,
    counters: &mut Counters,
    mut record: Option<&mut AscentRecord>,
) -> Result<StepOutput> {
    expect_kind(cfg, &[StrategyKind::Flag, StrategyKind::FreeLb], "flag_step")?;
    cfg.validate()?;
    let m = cfg.ascent_steps;
    let inv_m = 1.0 / m as f64;
    let shape = model.surface_shape(batch.input);
    let mut state = init_perturbation(shape, cfg, batch.labeled_rows, &mut rngs.perturb)?;
    let mut acc = model.zero_grads();
    let mut losses = Vec::with_capacity(m);

    for _ in 0..m {
        let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, true)?;
        for (a, g) in acc.iter_mut().zip(&p.grads.params) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += inv_m * y;
            }
        }
        losses.push(p.loss);
        if let Some(rec) = record.as_deref_mut() {
            rec.deltas.push(state.delta.clone());
            rec.masks.push(p.masks.clone());
        }
        state.ascent_step(input_grad(&p))?;
    }
    if let Some(rec) = record {
        rec.final_delta = Some(state.delta);
    }

    Ok(StepOutput {
        grads: acc,
        loss: losses.iter().sum::<f64>() * inv_m,
        ascent_losses: losses,
    })
}

/// `M` sign-ascent steps from `δ₀ = 0`, each projected onto the ℓ∞ ball, then
/// the parameter gradient at the final `X + δ_M`.
pub fn pgd_step(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &StrategyConfig,
    rngs: &mut StepRngs,
    counters: &mut Counters,
) -> Result<(StepOutput, PerturbState)> {
    expect_kind(cfg, &[StrategyKind::Pgd], "pgd_step")?;
    cfg.validate()?;
    let epsilon = cfg.epsilon.expect("validated");
    let mut state = PerturbState::zeros(model.surface_shape(batch.input), cfg, batch.labeled_rows)?;
    let mut losses = Vec::with_capacity(cfg.ascent_steps);
    for _ in 0..cfg.ascent_steps {
        let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, true)?;
        losses.push(p.loss);
        state.ascent_step(input_grad(&p))?;
        state.project_linf(epsilon)?;
    }
    let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, false)?;
    Ok((
        StepOutput {
            grads: p.grads.params,
            loss: p.loss,
            ascent_losses: losses,
        },
        state,
    ))
}

/// One sign step of size `α` from `δ₀ = 0`, then the parameter gradient at
/// `X + δ₁`.
pub fn fgsm_step(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &StrategyConfig,
    rngs: &mut StepRngs,
    counters: &mut Counters,
) -> Result<(StepOutput, PerturbState)> {
    expect_kind(cfg, &[StrategyKind::Fgsm], "fgsm_step")?;
    cfg.validate()?;
    let mut state = PerturbState::zeros(model.surface_shape(batch.input), cfg, batch.labeled_rows)?;
    let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, true)?;
    let first_loss = p.loss;
    state.ascent_step(input_grad(&p))?;
    let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, false)?;
    Ok((
        StepOutput {
            grads: p.grads.params,
            loss: p.loss,
            ascent_losses: vec![first_loss],
        },
        state,
    ))
}

/// One replay of free adversarial training.
///
/// A single forward/backward at `X + δ` yields both gradients: the parameter
/// gradient is returned for an immediate optimizer step and `δ` (which
/// persists across replays and epochs) takes one ascent step, clamped to `ε`
/// when a budget is set.
pub fn free_step(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &StrategyConfig,
    state: &mut PerturbState,
    rngs: &mut StepRngs,
    counters: &mut Counters,
) -> Result<StepOutput> {
    expect_kind(cfg, &[StrategyKind::Free], "free_step")?;
    let p = pass(model, batch, Some(&state.delta), &mut rngs.dropout, counters, true)?;
    state.ascent_step(input_grad(&p))?;
    if let Some(eps) = cfg.epsilon {
        state.project_linf(eps)?;
    }
    Ok(StepOutput {
        grads: p.grads.params,
        loss: p.loss,
        ascent_losses: vec![p.loss],
    })
}
