//! The epoch loop, evaluation and model selection.

use serde::{Deserialize, Serialize};

use super::config::{Arch, TrainConfig};
use super::dataset::{Dataset, DatasetView};
use super::optimizer::Optimizer;
use crate::augment::{
    clean_step, fgsm_step, flag_step, free_step, pgd_step, Batch, Counters, PerturbState, StepRngs, StrategyKind,
};
use crate::error::{Error, Result};
use crate::graph::NodeInput;
use crate::linalg::Matrix;
use crate::nn::{Model, Structure, Task};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<EpochRecord>,
    pub counters: Counters,
    /// Record with the best validation accuracy.
    pub selected: EpochRecord,
    pub epochs_run: usize,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of masked rows whose argmax matches the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::dim(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        total += 1;
        correct += (argmax(logits.row(i)) == labels[i]) as usize;
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

/// Eval-mode accuracy of `model` on the masked rows.
pub fn evaluate(
    model: &Model,
    input: &NodeInput,
    structure: Structure<'_>,
    labels: &[usize],
    mask: &[bool],
) -> Result<f64> {
    let logits = model.predict(input, structure)?;
    accuracy(&logits, labels, mask)
}

/// Best validation accuracy, earliest epoch on ties.
pub fn select_best(records: &[EpochRecord]) -> Option<EpochRecord> {
    let mut best: Option<EpochRecord> = None;
    for r in records {
        if best.is_none_or(|b| r.val_acc > b.val_acc) {
            best = Some(*r);
        }
    }
    best
}

/// Builds the configured architecture for a dataset.
pub fn build_model(cfg: &TrainConfig, data: &Dataset) -> Result<Model> {
    let mut rng = stream(cfg.seed, Stream::Init);
    let spec = &cfg.model;
    match (spec.arch, data) {
        (Arch::Gcn | Arch::Mlp, Dataset::Node(d)) => {
            let mut dims = vec![d.features().cols()];
            dims.extend(&spec.hidden);
            dims.push(d.num_classes);
            if spec.arch == Arch::Gcn {
                Model::gcn(&dims, spec.dropout, &mut rng)
            } else {
                Model::mlp(&dims, spec.dropout, &mut rng)
            }
        }
        (Arch::GraphGcn, Dataset::Graph(d)) => Model::graph_classifier(
            d.vocab_size,
            spec.embed_dim,
            &spec.hidden,
            d.num_classes,
            spec.dropout,
            spec.readout,
            &mut rng,
        ),
        (Arch::GraphGcn, Dataset::Node(_)) => Err(Error::Config("arch graph-gcn needs a graphs dataset".into())),
        (_, Dataset::Graph(_)) => Err(Error::Config("graphs datasets need arch graph-gcn".into())),
    }
}

/// Loads the configured dataset and trains on it.
pub fn train(cfg: &TrainConfig) -> Result<RunHistory> {
    let data = Dataset::load(&cfg.data)?;
    train_on(cfg, &data)
}

pub fn train_on(cfg: &TrainConfig, data: &Dataset) -> Result<RunHistory> {
    train_observed(cfg, data, |_, _| {}).map(|(h, _)| h)
}

/// Trains and returns the history and the final model; `observe` sees the
/// model after every epoch's parameter updates.
pub fn train_observed(
    cfg: &TrainConfig,
    data: &Dataset,
    mut observe: impl FnMut(usize, &Model),
) -> Result<(RunHistory, Model)> {
    cfg.validate()?;
    let view = data.view();
    check_masks(&view)?;
    let mut model = build_model(cfg, data)?;
    if model.task() == Task::GraphClassification && view.structure.adjacency().num_nodes() == 0 {
        return Err(Error::Validation("dataset has no nodes".into()));
    }
    let lens: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay, &lens);
    let mut rngs = StepRngs::from_seed(cfg.seed);
    let mut counters = Counters::default();
    let strategy = &cfg.strategy;
    let batch = Batch {
        input: view.input,
        structure: view.structure,
        labels: view.labels,
        loss_mask: view.train_mask,
        labeled_rows: view.labeled_rows,
    };
    let mut free_state = match strategy.kind {
        StrategyKind::Free => Some(PerturbState::zeros(
            model.surface_shape(view.input),
            strategy,
            view.labeled_rows,
        )?),
        _ => None,
    };

    let epochs = cfg.effective_epochs();
    let mut records = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let loss = match strategy.kind {
            StrategyKind::Free => {
                let state = free_state.as_mut().expect("free state");
                let mut total = 0.0;
                for _ in 0..strategy.ascent_steps {
                    let out = free_step(&model, &batch, strategy, state, &mut rngs, &mut counters)?;
                    check_loss(epoch, out.loss)?;
                    apply(&mut opt, &mut model, &out.grads, &mut counters)?;
                    total += out.loss;
                }
                total / strategy.ascent_steps as f64
            }
            kind => {
                let out = match kind {
                    StrategyKind::Clean => clean_step(&model, &batch, &mut rngs, &mut counters)?,
                    StrategyKind::Flag | StrategyKind::FreeLb => {
                        flag_step(&model, &batch, strategy, &mut rngs, &mut counters, None)?
                    }
                    StrategyKind::Pgd => pgd_step(&model, &batch, strategy, &mut rngs, &mut counters)?.0,
                    StrategyKind::Fgsm => fgsm_step(&model, &batch, strategy, &mut rngs, &mut counters)?.0,
                    StrategyKind::Free => unreachable!(),
                };
                check_loss(epoch, out.loss)?;
                apply(&mut opt, &mut model, &out.grads, &mut counters)?;
                out.loss
            }
        };
        observe(epoch, &model);

        if epoch % cfg.eval_every == 0 || epoch == epochs {
            let logits = model.predict(view.input, view.structure)?;
            if !logits.is_finite() {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            records.push(EpochRecord {
                epoch,
                train_loss: loss,
                train_acc: accuracy(&logits, view.labels, view.train_mask)?,
                val_acc: accuracy(&logits, view.labels, view.val_mask)?,
                test_acc: accuracy(&logits, view.labels, view.test_mask)?,
            });
        }
    }

    let selected = select_best(&records).expect("at least one epoch");
    Ok((
        RunHistory {
            records,
            counters,
            selected,
            epochs_run: epochs,
        },
        model,
    ))
}

fn check_masks(view: &DatasetView<'_>) -> Result<()> {
    for (name, mask) in [("train", view.train_mask), ("val", view.val_mask), ("test", view.test_mask)] {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Validation(format!("{name} split is empty")));
        }
    }
    for (i, (&l, &m)) in view.labels.iter().zip(view.train_mask).enumerate() {
        if m && l >= view.num_classes {
            return Err(Error::Range {
                what: "label",
                index: i,
                limit: view.num_classes,
            });
        }
    }
    Ok(())
}

fn check_loss(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

fn apply(opt: &mut Optimizer, model: &mut Model, grads: &[Vec<f64>], counters: &mut Counters) -> Result<()> {
    opt.step(&mut model.params_mut(), grads)?;
    counters.param_updates += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, val_acc: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.0,
            train_acc: 0.0,
            val_acc,
            test_acc: epoch as f64,
        }
    }

    #[test]
    fn selection_prefers_earliest_best() {
        assert_eq!(select_best(&[rec(1, 0.2), rec(2, 0.5), rec(3, 0.5)]).unwrap().epoch, 2);
        assert_eq!(select_best(&[rec(1, 0.1), rec(2, 0.2), rec(3, 0.3)]).unwrap().epoch, 3);
        assert!(select_best(&[]).is_none());
    }

    #[test]
    fn accuracy_tie_break_and_empty_mask() {
        let logits = Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[0, 1], &[true, true]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[1, 1], &[true, true]).unwrap(), 0.5);
        assert!(matches!(accuracy(&logits, &[0, 1], &[false, false]), Err(Error::EmptyMask)));
    }
}
