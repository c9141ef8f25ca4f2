//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to stderr
//! (bypassing the test harness's output capture) and then asserts.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use common::{dense_normalized, kink_free_gcn, random_graph, rng, NodeProblem};
use flag_core::augment::{
    flag_step, pgd_step, AscentRecord, Counters, NormMode, StepRngs, StrategyConfig, StrategyKind,
};
use flag_core::experiment::synth::{node_dataset, write_node_dataset, NodeDataFiles, NodeSynthSpec};
use flag_core::experiment::{self, ExperimentKind, ExperimentSpec, COMPARE_ARMS};
use flag_core::graph::{CsrGraph, NodeInput, NormalizedAdjacency};
use flag_core::nn::{grad_check, softmax_cross_entropy, CheckMode, Mode};
use flag_core::train::{train_observed, train_on, ConfigEntries, Dataset, TrainConfig};
use flag_core::Matrix;
use rand::Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("{} criterion {n}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n}: {detail}");
}

fn linf(m: &Matrix) -> f64 {
    m.as_slice().iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn toy() -> Dataset {
    Dataset::Node(node_dataset(&NodeSynthSpec::toy(), 0).unwrap())
}

#[test]
fn criterion_1_gradient_correctness() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for seed in 0..50 {
        let (model, s, x, labels, mask) = kink_free_gcn(1000 + seed, 0.0, h);
        let r = grad_check(&model, &NodeInput::Dense(x), (&s).into(), &labels, &mask, h, CheckMode::Eval).unwrap();
        worst = worst.max(r.max_rel_err);
        entries += r.entries_checked;
    }
    report(
        1,
        worst <= 1e-5,
        &format!("50 random 2-layer GCNs, {entries} parameter and input entries, max relative error {worst:.2e} (limit 1e-5)"),
    );
}

#[test]
fn criterion_2_normalization_oracle() {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let g = random_graph(&mut r, 64);
        let s = NormalizedAdjacency::from_graph(&g).to_dense();
        let want = dense_normalized(&g);
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                worst = worst.max((s[(i, j)] - w).abs());
            }
        }
    }
    report(
        2,
        worst <= 1e-12,
        &format!("200 random graphs up to 64 nodes, max deviation from dense formula {worst:.2e} (limit 1e-12)"),
    );
}

fn trajectory(cfg: &TrainConfig, data: &Dataset) -> Vec<Vec<f64>> {
    let mut params = Vec::new();
    train_observed(cfg, data, |_, m| params.push(m.params().iter().flat_map(|p| p.iter().copied()).collect()))
        .unwrap();
    params
}

#[test]
fn criterion_3_zero_step_flag_is_clean_training() {
    let data = toy();
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let clean = TrainConfig {
            epochs: 50,
            seed,
            ..TrainConfig::default()
        };
        let mut s = StrategyConfig::new(StrategyKind::Flag, 0.0);
        s.ascent_steps = 1;
        let flag = TrainConfig {
            strategy: s,
            ..clean.clone()
        };
        let a = trajectory(&clean, &data);
        let b = trajectory(&flag, &data);
        assert_eq!(a.len(), 50);
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.iter().zip(y) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    report(
        3,
        worst <= 1e-12,
        &format!("flag(M=1, alpha=0) vs clean over 50 epochs x 3 seeds, max parameter deviation {worst:.2e} (limit 1e-12)"),
    );
}

#[test]
fn criterion_4_accumulation_replay() {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let p = NodeProblem::random(&mut r, 16, 0.5);
        let m = r.gen_range(1..6);
        let mut cfg = StrategyConfig::new(StrategyKind::Flag, r.gen_range(0.001..0.05));
        cfg.ascent_steps = m;
        cfg.alpha_u = 2.0 * cfg.alpha_l;
        let mut rec = AscentRecord::default();
        let out = flag_step(
            &p.model,
            &p.batch(),
            &cfg,
            &mut StepRngs::from_seed(seed),
            &mut Counters::default(),
            Some(&mut rec),
        )
        .unwrap();
        let mut mean = p.model.zero_grads();
        for (delta, masks) in rec.deltas.iter().zip(&rec.masks) {
            let (logits, tape) = p
                .model
                .forward(&p.input, Some(delta), (&p.adjacency).into(), &mut Mode::Replay(masks))
                .unwrap();
            let (_, d) = softmax_cross_entropy(&logits, &p.labels, &p.train).unwrap();
            let g = p.model.backward(&tape, &d, false).unwrap();
            for (a, b) in mean.iter_mut().flatten().zip(g.params.iter().flatten()) {
                *a += b / m as f64;
            }
        }
        for (a, b) in out.grads.iter().flatten().zip(mean.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        4,
        worst <= 1e-12,
        &format!("50 flag steps replayed from recorded perturbations and masks, max gradient deviation {worst:.2e} (limit 1e-12)"),
    );
}

#[test]
fn criterion_5_perturbation_bounds() {
    let mut r = rng(5);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for trial in 0..1000u64 {
        let p = NodeProblem::random(&mut r, 16, 0.5);
        let m = r.gen_range(1..9);
        let alpha = r.gen_range(0.0..0.1);
        if trial % 2 == 0 {
            let mut cfg = StrategyConfig::new(StrategyKind::Flag, alpha);
            cfg.ascent_steps = m;
            cfg.alpha_u = r.gen_range(0.0..0.1);
            let mut rec = AscentRecord::default();
            flag_step(
                &p.model,
                &p.batch(),
                &cfg,
                &mut StepRngs::from_seed(trial),
                &mut Counters::default(),
                Some(&mut rec),
            )
            .unwrap();
            let bound = (m + 1) as f64 * cfg.max_alpha();
            let got = linf(rec.final_delta.as_ref().unwrap());
            violations += usize::from(got > bound);
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(got / bound);
            }
        } else {
            let mut cfg = StrategyConfig::new(StrategyKind::Pgd, alpha);
            cfg.ascent_steps = m;
            let eps = r.gen_range(0.0..0.2);
            cfg.epsilon = Some(eps);
            let (_, state) =
                pgd_step(&p.model, &p.batch(), &cfg, &mut StepRngs::from_seed(trial), &mut Counters::default())
                    .unwrap();
            violations += usize::from(linf(&state.delta) > eps);
        }
    }
    report(
        5,
        violations == 0,
        &format!(
            "1000 randomized runs (500 unbounded flag, 500 pgd), {violations} bound violations, largest flag |delta|/((M+1)alpha) = {worst_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_6_free_accounting() {
    let data = toy();
    let mut lines = Vec::new();
    let mut pass = true;
    for (n, m) in [(300usize, 3usize), (200, 3), (100, 4), (50, 7)] {
        let clean = TrainConfig {
            epochs: n,
            ..TrainConfig::default()
        };
        let mut s = StrategyConfig::new(StrategyKind::Flag, 1e-3);
        s.ascent_steps = m;
        let flag = TrainConfig {
            epochs: n,
            strategy: s,
            free_budget: true,
            ..TrainConfig::default()
        };
        let c = train_on(&clean, &data).unwrap();
        let f = train_on(&flag, &data).unwrap();
        let ok = f.epochs_run == n.div_ceil(m) && f.counters.forwards.abs_diff(c.counters.forwards) <= m as u64;
        pass &= ok;
        lines.push(format!(
            "N={n} M={m}: clean {} forwards, flag {} epochs {} forwards",
            c.counters.forwards, f.epochs_run, f.counters.forwards
        ));
    }
    report(6, pass, &lines.join("; "));
}

/// Directory of a user-supplied Cora-scale dataset (`edges.txt`,
/// `features.txt`, `labels.txt`, `split.txt`), if any.
fn cora_dir() -> Option<PathBuf> {
    std::env::var_os("FLAG_CORA_DIR").map(PathBuf::from)
}

#[test]
fn criterion_7_noise_sweep_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let (files, source) = match cora_dir() {
        Some(dir) => (NodeDataFiles::in_dir(&dir), format!("dataset in {}", dir.display())),
        None => {
            let data = node_dataset(&NodeSynthSpec::cora_scale(), 0).unwrap();
            (
                write_node_dataset(&tmp.path().join("data"), &data).unwrap(),
                "synthetic Cora-scale graph (set FLAG_CORA_DIR to use real files)".to_string(),
            )
        }
    };
    let text = format!(
        "{}\n[model]\narch = gcn\nhidden = 16\ndropout = 0.5\n[strategy]\nalpha_l = 0.01\nnorm = sign\n[train]\nepochs = 200\n",
        files.config_section()
    );
    let spec = ExperimentSpec {
        kind: ExperimentKind::NoiseSweep,
        config: ConfigEntries::parse(&text, ".").unwrap(),
        seeds: Some((0..10).collect()),
        sigmas: vec![0.0, 1.0],
        out: tmp.path().join("out"),
    };
    let start = Instant::now();
    let rows = experiment::run_noise_sweep(&spec).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let (zero, one) = (&rows[0], &rows[1]);
    let pass = zero.fgsm.test_acc.mean >= zero.clean.test_acc.mean && one.gap() < zero.gap();
    report(
        7,
        pass,
        &format!(
            "{source}, seeds 0..9: sigma=0 clean {:.4}±{:.4} fgsm {:.4}±{:.4} gap {:+.4}; sigma=1 clean {:.4}±{:.4} fgsm {:.4}±{:.4} gap {:+.4}; {minutes:.1} min",
            zero.clean.test_acc.mean,
            zero.clean.test_acc.std,
            zero.fgsm.test_acc.mean,
            zero.fgsm.test_acc.std,
            zero.gap(),
            one.clean.test_acc.mean,
            one.clean.test_acc.std,
            one.fgsm.test_acc.mean,
            one.fgsm.test_acc.std,
            one.gap()
        ),
    );
}

#[test]
fn criterion_8_biased_perturbation() {
    let mut r = rng(8);
    let mut labeled_violations = 0;
    let mut unlabeled_beyond = 0;
    let trials = 500;
    for trial in 0..trials {
        // a path backbone keeps every unlabeled node within reach of the loss
        let n = r.gen_range(6..20);
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        for _ in 0..n {
            let (u, v) = (r.gen_range(0..n), r.gen_range(0..n));
            if u != v && !edges.contains(&(u.min(v), u.max(v))) {
                edges.push((u.min(v), u.max(v)));
            }
        }
        // no dropout: every ascent step sees the full input gradient
        let mut p = NodeProblem::random(&mut r, 2, 0.0);
        let g = CsrGraph::from_edges(n, &edges).unwrap();
        let d = r.gen_range(3..8);
        let c = r.gen_range(2..5);
        p.model = flag_core::nn::Model::gcn(&[d, 8, c], 0.0, &mut r).unwrap();
        p.adjacency = NormalizedAdjacency::from_graph(&g);
        p.input = NodeInput::Dense(common::random_matrix(&mut r, n, d));
        p.labels = (0..n).map(|_| r.gen_range(0..c)).collect();
        p.train = (0..n).map(|i| i % 2 == 0).collect();

        let m = r.gen_range(1..6);
        let alpha_l = r.gen_range(1e-4..1e-2);
        let mut cfg = StrategyConfig::new(StrategyKind::Flag, alpha_l);
        cfg.ascent_steps = m;
        cfg.alpha_u = 2.0 * alpha_l;
        cfg.norm = NormMode::Sign;
        let mut rec = AscentRecord::default();
        flag_step(
            &p.model,
            &p.batch(),
            &cfg,
            &mut StepRngs::from_seed(trial),
            &mut Counters::default(),
            Some(&mut rec),
        )
        .unwrap();
        let delta = rec.final_delta.unwrap();
        let bound = (m + 1) as f64 * alpha_l;
        let mut beyond = false;
        for i in 0..n {
            let row = linf(&Matrix::from_vec(1, d, delta.row(i).to_vec()).unwrap());
            if p.train[i] {
                labeled_violations += usize::from(row > bound);
            } else {
                beyond |= row > bound;
            }
        }
        unlabeled_beyond += usize::from(beyond);
    }
    report(
        8,
        labeled_violations == 0 && unlabeled_beyond == trials as usize,
        &format!(
            "{trials} trials with alpha_u = 2 alpha_l: {labeled_violations} labeled entries beyond (M+1)alpha_l, unlabeled rows beyond it in {unlabeled_beyond}/{trials} trials"
        ),
    );
}

#[test]
fn criterion_9_strategy_comparison_harness() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_node_dataset(&tmp.path().join("data"), &node_dataset(&NodeSynthSpec::toy(), 0).unwrap()).unwrap();
    let text = format!("{}\n[train]\nepochs = 50\n[strategy]\nalpha_l = 0.01\n", files.config_section());
    let spec = ExperimentSpec {
        kind: ExperimentKind::CompareStrategies,
        config: ConfigEntries::parse(&text, ".").unwrap(),
        seeds: Some((0..3).collect()),
        sigmas: Vec::new(),
        out: tmp.path().join("compare"),
    };
    let arms = experiment::run_compare_strategies(&spec).unwrap();
    let table = std::fs::read_to_string(spec.out.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    let names: Vec<&str> = arms.iter().map(|a| a.arm.as_str()).collect();
    let ms: Vec<usize> = arms.iter().map(|a| a.runs[0].m).collect();
    let want_names: Vec<&str> = COMPARE_ARMS.iter().map(|(n, _)| *n).collect();
    let pass = rows.len() == 6
        && names == want_names
        && ms[1..] == [8, 8, 3, 3]
        && arms.iter().all(|a| a.runs.iter().all(|r| r.strategy == a.arm));
    let summary: Vec<String> = arms
        .iter()
        .map(|a| format!("{}(M={}) {:.3}", a.arm, a.runs[0].m, a.test_acc.mean))
        .collect();
    report(
        9,
        pass,
        &format!("toy dataset, 3 seeds, {} table rows: {}", rows.len() - 1, summary.join(", ")),
    );
}
