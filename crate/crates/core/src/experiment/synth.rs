//! Seeded synthetic datasets.
//!
//! Node datasets are planted-partition citation-like graphs: each class owns
//! a set of topic words, nodes carry binary bag-of-words features drawn
//! mostly from their class topics, and edges join same-class nodes with a
//! configurable probability.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::graph::io::{write_features, write_graph, write_graph_dataset, write_labels, write_split, GraphSplit, LabeledGraph};
use crate::graph::{CsrGraph, NodeSplit, TokenRows};
use crate::linalg::Matrix;
use crate::rng::{stream, Stream};
use crate::train::NodeDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSynthSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Undirected edges to place.
    pub edges: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Inclusive range of active words per node.
    pub words_per_node: (usize, usize),
    /// Topic words owned by each class.
    pub topic_words: usize,
    /// Probability that an active word is drawn from the node's class topic.
    pub topic_prob: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl NodeSynthSpec {
    /// 90 nodes, 3 classes, 12 features; trains in well under a second.
    pub fn toy() -> Self {
        NodeSynthSpec {
            nodes: 90,
            classes: 3,
            features: 12,
            edges: 180,
            homophily: 0.8,
            words_per_node: (2, 5),
            topic_words: 3,
            topic_prob: 0.6,
            train_per_class: 5,
            val: 30,
            test: 45,
        }
    }

    /// Same sizes as the Cora citation graph (2708 nodes, 5278 edges,
    /// 1433 binary word features, 7 classes, 20 labels per class, 500
    /// validation and 1000 test nodes).
    pub fn cora_scale() -> Self {
        NodeSynthSpec {
            nodes: 2708,
            classes: 7,
            features: 1433,
            edges: 5278,
            homophily: 0.81,
            words_per_node: (9, 27),
            topic_words: 60,
            topic_prob: 0.15,
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Draws a node-classification dataset from `spec`; the same seed always
/// yields the same dataset.
pub fn node_dataset(spec: &NodeSynthSpec, seed: u64) -> Result<NodeDataset> {
    let mut rng = stream(seed, Stream::Synth);
    let n = spec.nodes;
    let c = spec.classes.max(1);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let mut members = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }

    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(spec.edges);
    let max_edges = n * n.saturating_sub(1) / 2;
    let mut attempts = 0usize;
    while edges.len() < spec.edges.min(max_edges) && attempts < 100 * spec.edges + 100 {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = if rng.gen::<f64>() < spec.homophily {
            *members[labels[u]].choose(&mut rng).expect("own class is non-empty")
        } else {
            rng.gen_range(0..n)
        };
        let key = (u.min(v), u.max(v));
        if u != v && seen.insert(key) {
            edges.push(key);
        }
    }
    let graph = CsrGraph::from_edges(n, &edges)?;

    let topics: Vec<Vec<usize>> = (0..c)
        .map(|_| rand::seq::index::sample(&mut rng, spec.features, spec.topic_words.min(spec.features)).into_vec())
        .collect();
    let mut x = Matrix::zeros(n, spec.features);
    let (lo, hi) = spec.words_per_node;
    for i in 0..n {
        let k = rng.gen_range(lo..=hi.max(lo));
        let row = x.row_mut(i);
        for _ in 0..k {
            let w = if rng.gen::<f64>() < spec.topic_prob && !topics[labels[i]].is_empty() {
                *topics[labels[i]].choose(&mut rng).expect("non-empty")
            } else {
                rng.gen_range(0..spec.features)
            };
            row[w] = 1.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut per_class = vec![0; c];
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for &i in &order {
        if per_class[labels[i]] < spec.train_per_class {
            per_class[labels[i]] += 1;
            train.push(i);
        } else {
            rest.push(i);
        }
    }
    let val: Vec<usize> = rest.iter().copied().take(spec.val).collect();
    let test: Vec<usize> = rest.iter().copied().skip(spec.val).take(spec.test).collect();
    let split = NodeSplit::from_indices(n, &train, &val, &test)?;
    NodeDataset::new(graph, x, labels, split)
}

/// File paths of a node dataset written by [`write_node_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
}

impl NodeDataFiles {
    pub fn in_dir(dir: &Path) -> Self {
        NodeDataFiles {
            edges: dir.join("edges.txt"),
            features: dir.join("features.txt"),
            labels: dir.join("labels.txt"),
            split: dir.join("split.txt"),
        }
    }

    /// `[data]` section pointing at these files.
    pub fn config_section(&self) -> String {
        format!(
            "[data]\nedges = {}\nfeatures = {}\nlabels = {}\nsplit = {}\n",
            self.edges.display(),
            self.features.display(),
            self.labels.display(),
            self.split.display()
        )
    }
}

pub fn write_node_dataset(dir: &Path, data: &NodeDataset) -> Result<NodeDataFiles> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let files = NodeDataFiles::in_dir(dir);
    write_graph(&files.edges, &data.graph)?;
    write_features(&files.features, data.features())?;
    write_labels(&files.labels, &data.labels)?;
    write_split(&files.split, &data.split)?;
    Ok(files)
}

/// Small graph-classification set: label 1 when token 0 occurs more often
/// than token 1. Graphs are random trees of 4 to 10 nodes over a vocabulary
/// of 6 tokens, split 60/20/20.
pub fn graph_dataset(count: usize, seed: u64) -> Result<Vec<LabeledGraph>> {
    let mut rng = stream(seed, Stream::Synth);
    let mut out = Vec::with_capacity(count);
    for g in 0..count {
        let n = rng.gen_range(4..=10);
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=2);
                (0..k).map(|_| rng.gen_range(0..6)).collect()
            })
            .collect();
        let count_of = |t: usize| rows.iter().flatten().filter(|&&x| x == t).count();
        let label = (count_of(0) > count_of(1)) as usize;
        let split = match g % 5 {
            0..=2 => GraphSplit::Train,
            3 => GraphSplit::Val,
            _ => GraphSplit::Test,
        };
        out.push(LabeledGraph {
            graph: CsrGraph::from_edges(n, &edges)?,
            tokens: TokenRows::new(&rows),
            label,
            split,
        });
    }
    Ok(out)
}

pub fn write_graphs(path: &Path, graphs: &[LabeledGraph]) -> Result<()> {
    write_graph_dataset(path, graphs)
}
