//! In-memory datasets for the two task kinds.

use super::config::DataConfig;
use crate::error::{Error, Result};
use crate::graph::io::{load_graph_dataset, GraphSplit, LabeledGraph};
use crate::graph::{
    batch_graphs, load_features, load_graph, load_labels, load_split, CsrGraph, GraphBatch, NodeInput,
    NormalizedAdjacency, NodeSplit,
};
use crate::linalg::Matrix;
use crate::nn::Structure;

/// One graph with dense node features, transductive split.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub graph: CsrGraph,
    pub adjacency: NormalizedAdjacency,
    pub input: NodeInput,
    pub labels: Vec<usize>,
    pub split: NodeSplit,
    pub num_classes: usize,
}

impl NodeDataset {
    pub fn new(graph: CsrGraph, features: Matrix, labels: Vec<usize>, split: NodeSplit) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::Validation(format!("{} feature rows for {n} nodes", features.rows())));
        }
        if labels.len() != n {
            return Err(Error::Validation(format!("{} labels for {n} nodes", labels.len())));
        }
        if split.num_nodes() != n {
            return Err(Error::Validation(format!("split covers {} nodes, graph has {n}", split.num_nodes())));
        }
        features.ensure_finite("features")?;
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(NodeDataset {
            adjacency: NormalizedAdjacency::from_graph(&graph),
            graph,
            input: NodeInput::Dense(features),
            labels,
            split,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        self.input.as_dense().expect("node datasets hold dense features")
    }

    /// Same graph, labels and split with replaced features.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::new(self.graph.clone(), features, self.labels.clone(), self.split.clone())
    }
}

/// Graph-classification dataset held as one block-diagonal batch.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub batch: GraphBatch,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub num_classes: usize,
    pub vocab_size: usize,
}

impl GraphDataset {
    pub fn new(graphs: Vec<LabeledGraph>) -> Result<Self> {
        let mut masks = [Vec::new(), Vec::new(), Vec::new()];
        let mut vocab = 0;
        let mut members = Vec::with_capacity(graphs.len());
        for g in graphs {
            let which = match g.split {
                GraphSplit::Train => 0,
                GraphSplit::Val => 1,
                GraphSplit::Test => 2,
            };
            for (k, m) in masks.iter_mut().enumerate() {
                m.push(k == which);
            }
            vocab = vocab.max(g.tokens.max_id().map_or(0, |m| m + 1));
            members.push(g.into());
        }
        let batch = batch_graphs(&members)?;
        let num_classes = batch.labels.iter().max().map_or(0, |&m| m + 1);
        let [train_mask, val_mask, test_mask] = masks;
        Ok(GraphDataset {
            batch,
            train_mask,
            val_mask,
            test_mask,
            num_classes,
            vocab_size: vocab,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Node(NodeDataset),
    Graph(GraphDataset),
}

/// Borrowed pieces the training loop needs, uniform over task kinds.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub input: &'a NodeInput,
    pub structure: Structure<'a>,
    /// One label per output row.
    pub labels: &'a [usize],
    pub train_mask: &'a [bool],
    pub val_mask: &'a [bool],
    pub test_mask: &'a [bool],
    /// Rows of the perturbation surface that are labeled, when the task
    /// distinguishes them.
    pub labeled_rows: Option<&'a [bool]>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        let node_keys = [&cfg.edges, &cfg.features, &cfg.labels, &cfg.split];
        if let Some(path) = &cfg.graphs {
            if node_keys.iter().any(|k| k.is_some()) {
                return Err(Error::Config(
                    "graphs cannot be combined with edges/features/labels/split".into(),
                ));
            }
            return Ok(Dataset::Graph(GraphDataset::new(load_graph_dataset(path)?)?));
        }
        let need = |p: &Option<std::path::PathBuf>, key: &str| {
            p.clone().ok_or_else(|| Error::Config(format!("missing data key {key}")))
        };
        let graph = load_graph(need(&cfg.edges, "edges")?)?;
        let mut features = load_features(need(&cfg.features, "features")?)?;
        if cfg.row_normalize {
            row_normalize(&mut features);
        }
        let labels = load_labels(need(&cfg.labels, "labels")?)?;
        let split = load_split(need(&cfg.split, "split")?, graph.num_nodes())?;
        Ok(Dataset::Node(NodeDataset::new(graph, features, labels, split)?))
    }

    pub fn view(&self) -> DatasetView<'_> {
        match self {
            Dataset::Node(d) => DatasetView {
                input: &d.input,
                structure: Structure::Node(&d.adjacency),
                labels: &d.labels,
                train_mask: &d.split.train_mask,
                val_mask: &d.split.val_mask,
                test_mask: &d.split.test_mask,
                labeled_rows: Some(d.split.labeled_mask()),
                num_classes: d.num_classes,
            },
            Dataset::Graph(d) => DatasetView {
                input: &d.batch.input,
                structure: (&d.batch).into(),
                labels: &d.batch.labels,
                train_mask: &d.train_mask,
                val_mask: &d.val_mask,
                test_mask: &d.test_mask,
                labeled_rows: None,
                num_classes: d.num_classes,
            },
        }
    }
}

/// Scales every row with a positive sum to sum to one.
pub fn row_normalize(x: &mut Matrix) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}
