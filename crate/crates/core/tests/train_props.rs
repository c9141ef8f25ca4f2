mod common;

use common::rng;
use flag_core::augment::{StrategyConfig, StrategyKind};
use flag_core::experiment::synth::{node_dataset, NodeSynthSpec};
use flag_core::graph::{CsrGraph, NodeSplit};
use flag_core::nn::Model;
use flag_core::train::{
    accuracy, argmax, build_model, evaluate, select_best, train_observed, train_on, ConfigEntries, Dataset,
    EpochRecord, NodeDataset, Optimizer, OptimizerKind, TrainConfig,
};
use flag_core::{Error, Matrix};
use proptest::prelude::*;
use rand::Rng;

fn toy() -> Dataset {
    Dataset::Node(node_dataset(&NodeSynthSpec::toy(), 0).unwrap())
}

fn config(strategy: StrategyConfig, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        strategy,
        ..TrainConfig::default()
    }
}

#[test]
fn adam_matches_scalar_oracle_on_a_quadratic() {
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.05);
    let mut opt = Optimizer::new(OptimizerKind::adam_default(), lr, 0.0, &[1]);
    let mut theta = vec![1.5];
    let (mut x, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let g = 2.0 * theta[0];
        opt.step(&mut [&mut theta], &[vec![g]]).unwrap();

        let g = 2.0 * x;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + eps);
        assert!((theta[0] - x).abs() <= 1e-12, "step {t}: {} vs {x}", theta[0]);
    }
    assert!(x.abs() < 1.5);
}

#[test]
fn sgd_with_weight_decay_example() {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.5, &[2]);
    let mut theta = vec![1.0, -2.0];
    opt.step(&mut [&mut theta], &[vec![2.0, 0.0]]).unwrap();
    // θ - lr·(g + λθ)
    assert!((theta[0] - 0.75).abs() < 1e-15);
    assert!((theta[1] + 1.9).abs() < 1e-15);
    assert!(opt.step(&mut [&mut theta], &[vec![1.0]]).is_err());
}

#[test]
fn training_is_bitwise_deterministic() {
    let data = toy();
    for kind in [StrategyKind::Clean, StrategyKind::Flag, StrategyKind::Free, StrategyKind::Pgd] {
        let cfg = config(StrategyConfig::new(kind, 0.01), 20, 3);
        let a = train_on(&cfg, &data).unwrap();
        let b = train_on(&cfg, &data).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let data = toy();
    let a = train_on(&config(StrategyConfig::clean(), 10, 0), &data).unwrap();
    let b = train_on(&config(StrategyConfig::clean(), 10, 1), &data).unwrap();
    assert_ne!(a.records, b.records);
}

/// Two classes on two paths, with one feature column carrying the class.
fn separable() -> Dataset {
    let n = 40;
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        if i != n / 2 - 1 {
            edges.push((i, i + 1));
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut r = rng(60);
    let mut x = Matrix::zeros(n, 3);
    for (i, &l) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        row[0] = if l == 0 { 1.0 } else { -1.0 };
        row[1] = r.gen_range(-0.1..0.1);
        row[2] = 1.0;
    }
    let train: Vec<usize> = (0..n).step_by(2).collect();
    let val: Vec<usize> = (1..n).step_by(4).collect();
    let test: Vec<usize> = (3..n).step_by(4).collect();
    let split = NodeSplit::from_indices(n, &train, &val, &test).unwrap();
    Dataset::Node(NodeDataset::new(CsrGraph::from_edges(n, &edges).unwrap(), x, labels, split).unwrap())
}

#[test]
fn clean_training_fits_a_separable_toy_graph() {
    let h = train_on(&config(StrategyConfig::clean(), 200, 0), &separable()).unwrap();
    let first = h.records.iter().find(|r| r.train_acc == 1.0).expect("train accuracy reaches 1");
    assert!(first.epoch <= 200);
    assert_eq!(h.records.last().unwrap().train_acc, 1.0);
    assert!(h.records.last().unwrap().train_loss < h.records[0].train_loss);
}

#[test]
fn counters_per_strategy() {
    let data = toy();
    let run = |s: StrategyConfig, epochs: usize, free_budget: bool| {
        let mut cfg = config(s, epochs, 0);
        cfg.free_budget = free_budget;
        let c = train_on(&cfg, &data).unwrap().counters;
        (c.forwards, c.backwards, c.param_updates)
    };
    assert_eq!(run(StrategyConfig::clean(), 10, false), (10, 10, 10));
    assert_eq!(run(StrategyConfig::new(StrategyKind::Flag, 0.01), 10, false), (30, 30, 10));
    assert_eq!(run(StrategyConfig::new(StrategyKind::Fgsm, 0.01), 10, false), (20, 20, 10));
    assert_eq!(run(StrategyConfig::new(StrategyKind::Pgd, 0.01), 10, false), (90, 90, 10));
    let mut free = StrategyConfig::new(StrategyKind::Free, 0.01);
    free.ascent_steps = 3;
    free.epsilon = Some(0.03);
    assert_eq!(run(free.clone(), 10, false), (30, 30, 30));
    assert_eq!(run(free, 9, true), (9, 9, 9));
}

#[test]
fn free_budget_matches_clean_forward_count() {
    let data = toy();
    for n in [7usize, 12, 30] {
        let clean = train_on(&config(StrategyConfig::clean(), n, 0), &data).unwrap();
        for kind in [StrategyKind::Flag, StrategyKind::FreeLb, StrategyKind::Pgd] {
            for m in 1..=4 {
                let mut s = StrategyConfig::new(kind, 0.01);
                s.ascent_steps = m;
                if kind == StrategyKind::Pgd {
                    s.epsilon = Some(m as f64 * 0.01);
                }
                let mut cfg = config(s, n, 0);
                cfg.free_budget = true;
                let h = train_on(&cfg, &data).unwrap();
                let (f, c) = (h.counters.forwards, clean.counters.forwards);
                assert!(f >= c && f <= c + m as u64, "{kind} N={n} M={m}: {f} vs {c}");
            }
        }
    }
}

#[test]
fn observer_sees_every_epoch() {
    let data = toy();
    let mut seen = Vec::new();
    let (h, model) = train_observed(&config(StrategyConfig::clean(), 5, 0), &data, |e, _| seen.push(e)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4, 5]);
    assert_eq!(h.epochs_run, 5);
    let Dataset::Node(d) = &data else { unreachable!() };
    let acc = evaluate(&model, &d.input, (&d.adjacency).into(), &d.labels, &d.split.test_mask).unwrap();
    assert_eq!(acc, h.records.last().unwrap().test_acc);
}

#[test]
fn evaluation_matches_brute_force_count() {
    let data = toy();
    let Dataset::Node(d) = &data else { unreachable!() };
    for seed in 0..5 {
        let model: Model = build_model(&config(StrategyConfig::clean(), 1, seed), &data).unwrap();
        let logits = model.predict(&d.input, (&d.adjacency).into()).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for i in 0..d.labels.len() {
            if d.split.val_mask[i] {
                total += 1;
                let row = logits.row(i);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                hits += usize::from(best == d.labels[i]);
            }
        }
        let acc = evaluate(&model, &d.input, (&d.adjacency).into(), &d.labels, &d.split.val_mask).unwrap();
        assert_eq!(acc, hits as f64 / total as f64);
    }
}

#[test]
fn argmax_and_accuracy_examples() {
    assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    let logits = Matrix::from_rows(&[[0.1, 0.7, 0.2], [0.9, 0.0, 0.1]]).unwrap();
    assert_eq!(accuracy(&logits, &[1, 0], &[true, true]).unwrap(), 1.0);
    assert!(matches!(accuracy(&logits, &[1, 0], &[false, false]), Err(Error::EmptyMask)));
}

#[test]
fn config_errors_name_the_key() {
    let bad = [
        ("epochs = zero", "epochs"),
        ("strategy = sgld", "strategy"),
        ("strategy = flag\nepsilon = 0.1", "epsilon"),
        ("strategy = pgd\nepsilon = none", "epsilon"),
        ("M = 0\nstrategy = flag", "M"),
        ("dropout = 1.5", "dropout"),
        ("optimizer = rmsprop", "optimizer"),
        ("norm = l1", "norm"),
    ];
    for (text, key) in bad {
        let err = ConfigEntries::parse(text, ".")
            .and_then(|e| TrainConfig::from_entries(&e))
            .and_then(|c| c.validate().map(|_| c))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        assert!(err.to_string().contains(key), "{text}: {err}");
    }
    assert!(ConfigEntries::parse("colour = red", ".").is_err());
}

fn rec(epoch: usize, val_acc: f64) -> EpochRecord {
    EpochRecord {
        epoch,
        train_loss: 0.0,
        train_acc: 0.0,
        val_acc,
        test_acc: 0.0,
    }
}

proptest! {
    #[test]
    fn selection_matches_linear_scan(vals in proptest::collection::vec(0u8..5, 1..40)) {
        let records: Vec<EpochRecord> = vals.iter().enumerate().map(|(i, &v)| rec(i + 1, v as f64 / 4.0)).collect();
        let best = vals.iter().max().unwrap();
        let first = vals.iter().position(|v| v == best).unwrap();
        prop_assert_eq!(select_best(&records).unwrap().epoch, first + 1);
    }
}
