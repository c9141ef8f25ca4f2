use super::{CsrGraph, NormalizedAdjacency};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Discrete node features: a list of token ids per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRows {
    offsets: Vec<usize>,
    ids: Vec<usize>,
}

impl TokenRows {
    pub fn new<R: AsRef<[usize]>>(rows: &[R]) -> Self {
        let mut offsets = vec![0];
        let mut ids = Vec::new();
        for r in rows {
            ids.extend_from_slice(r.as_ref());
            offsets.push(ids.len());
        }
        TokenRows { offsets, ids }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.ids[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn max_id(&self) -> Option<usize> {
        self.ids.iter().copied().max()
    }

    fn append(&mut self, other: &TokenRows) {
        for i in 0..other.num_rows() {
            self.ids.extend_from_slice(other.row(i));
            self.offsets.push(self.ids.len());
        }
    }

    fn slice(&self, start: usize, end: usize) -> TokenRows {
        TokenRows::new(&(start..end).map(|i| self.row(i).to_vec()).collect::<Vec<_>>())
    }
}

/// What a model consumes per node: continuous features or token ids that an
/// embedding table maps into the continuous space.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeInput {
    Dense(Matrix),
    Tokens(TokenRows),
}

impl NodeInput {
    pub fn num_rows(&self) -> usize {
        match self {
            NodeInput::Dense(m) => m.rows(),
            NodeInput::Tokens(t) => t.num_rows(),
        }
    }

    pub fn as_dense(&self) -> Option<&Matrix> {
        match self {
            NodeInput::Dense(m) => Some(m),
            NodeInput::Tokens(_) => None,
        }
    }
}

impl From<Matrix> for NodeInput {
    fn from(m: Matrix) -> Self {
        NodeInput::Dense(m)
    }
}

impl From<TokenRows> for NodeInput {
    fn from(t: TokenRows) -> Self {
        NodeInput::Tokens(t)
    }
}

/// Several graphs assembled into one block-diagonal graph for readout.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub graph: CsrGraph,
    pub adjacency: NormalizedAdjacency,
    pub input: NodeInput,
    /// Owning graph of every node; non-decreasing.
    pub graph_id: Vec<usize>,
    pub num_graphs: usize,
    pub labels: Vec<usize>,
}

impl GraphBatch {
    /// First node of every graph, plus the total node count at the end.
    pub fn node_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0; self.num_graphs + 1];
        for &g in &self.graph_id {
            offsets[g + 1] += 1;
        }
        for g in 0..self.num_graphs {
            offsets[g + 1] += offsets[g];
        }
        offsets
    }

    /// Splits the batch back into its member graphs.
    pub fn unbatch(&self) -> Vec<(CsrGraph, NodeInput, usize)> {
        let offsets = self.node_offsets();
        (0..self.num_graphs)
            .map(|g| {
                let (lo, hi) = (offsets[g], offsets[g + 1]);
                let edges: Vec<(usize, usize)> = (lo..hi)
                    .flat_map(|u| {
                        self.graph
                            .neighbors(u)
                            .iter()
                            .filter(move |&&v| u < v)
                            .map(move |&v| (u - lo, v - lo))
                    })
                    .collect();
                let graph = CsrGraph::from_edges(hi - lo, &edges).expect("edges stay inside their block");
                let input = match &self.input {
                    NodeInput::Dense(m) => {
                        let rows: Vec<&[f64]> = (lo..hi).map(|i| m.row(i)).collect();
                        let mut sub = Matrix::from_rows(&rows).expect("uniform rows");
                        if rows.is_empty() {
                            sub = Matrix::zeros(0, m.cols());
                        }
                        NodeInput::Dense(sub)
                    }
                    NodeInput::Tokens(t) => NodeInput::Tokens(t.slice(lo, hi)),
                };
                (graph, input, self.labels[g])
            })
            .collect()
    }
}

/// Assembles graphs into a block-diagonal batch with cumulative node offsets.
pub fn batch_graphs(graphs: &[(CsrGraph, NodeInput, usize)]) -> Result<GraphBatch> {
    let Some(first) = graphs.first() else {
        return Err(Error::Validation("cannot batch an empty list of graphs".into()));
    };
    let total: usize = graphs.iter().map(|(g, _, _)| g.num_nodes()).sum();
    let mut edges = Vec::new();
    let mut graph_id = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (gi, (g, input, label)) in graphs.iter().enumerate() {
        if input.num_rows() != g.num_nodes() {
            return Err(Error::dim(format!(
                "graph {gi}: {} nodes but {} feature rows",
                g.num_nodes(),
                input.num_rows()
            )));
        }
        edges.extend(g.edges().map(|(u, v)| (u + offset, v + offset)));
        graph_id.extend(std::iter::repeat_n(gi, g.num_nodes()));
        labels.push(*label);
        offset += g.num_nodes();
    }

    let input = match &first.1 {
        NodeInput::Dense(m0) => {
            let d = m0.cols();
            let mut data = Vec::with_capacity(total * d);
            for (gi, (_, input, _)) in graphs.iter().enumerate() {
                match input {
                    NodeInput::Dense(m) if m.cols() == d => data.extend_from_slice(m.as_slice()),
                    NodeInput::Dense(m) => {
                        return Err(Error::dim(format!(
                            "graph {gi}: feature dim {} differs from {d}",
                            m.cols()
                        )))
                    }
                    NodeInput::Tokens(_) => {
                        return Err(Error::dim(format!("graph {gi}: token input mixed with dense features")))
                    }
                }
            }
            NodeInput::Dense(Matrix::from_vec(total, d, data)?)
        }
        NodeInput::Tokens(_) => {
            let mut all = TokenRows::new::<Vec<usize>>(&[]);
            for (gi, (_, input, _)) in graphs.iter().enumerate() {
                match input {
                    NodeInput::Tokens(t) => all.append(t),
                    NodeInput::Dense(_) => {
                        return Err(Error::dim(format!("graph {gi}: dense features mixed with token input")))
                    }
                }
            }
            NodeInput::Tokens(all)
        }
    };

    let graph = CsrGraph::from_edges(total, &edges)?;
    let adjacency = NormalizedAdjacency::from_graph(&graph);
    Ok(GraphBatch {
        graph,
        adjacency,
        input,
        graph_id,
        num_graphs: graphs.len(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_node(x: f64, label: usize) -> (CsrGraph, NodeInput, usize) {
        (CsrGraph::empty(1), Matrix::from_rows(&[[x]]).unwrap().into(), label)
    }

    #[test]
    fn two_singletons() {
        let b = batch_graphs(&[one_node(1.0, 0), one_node(2.0, 1)]).unwrap();
        assert_eq!(b.graph.num_nodes(), 2);
        assert_eq!(b.graph.num_edges(), 0);
        assert_eq!(b.graph_id, vec![0, 1]);
        assert_eq!(b.labels, vec![0, 1]);
    }

    #[test]
    fn triangle_and_path_stay_in_blocks() {
        let k3 = CsrGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let p2 = CsrGraph::from_edges(2, &[(0, 1)]).unwrap();
        let b = batch_graphs(&[
            (k3, Matrix::zeros(3, 2).into(), 0),
            (p2, Matrix::zeros(2, 2).into(), 1),
        ])
        .unwrap();
        assert_eq!(b.graph.num_nodes(), 5);
        assert_eq!(b.graph_id, vec![0, 0, 0, 1, 1]);
        for (u, v) in b.graph.edges() {
            assert_eq!(b.graph_id[u], b.graph_id[v]);
        }
        assert_eq!(b.graph.num_edges(), 4);
        assert_eq!(b.node_offsets(), vec![0, 3, 5]);
    }

    #[test]
    fn feature_dim_mismatch() {
        let err = batch_graphs(&[
            (CsrGraph::empty(1), Matrix::zeros(1, 2).into(), 0),
            (CsrGraph::empty(1), Matrix::zeros(1, 3).into(), 0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(batch_graphs(&[]).is_err());
    }

    #[test]
    fn token_batches_concatenate() {
        let a = TokenRows::new(&[vec![0, 1], vec![2]]);
        let b = TokenRows::new(&[vec![3]]);
        let batch = batch_graphs(&[
            (CsrGraph::from_edges(2, &[(0, 1)]).unwrap(), a.clone().into(), 0),
            (CsrGraph::empty(1), b.clone().into(), 1),
        ])
        .unwrap();
        let parts = batch.unbatch();
        assert_eq!(parts[0].1, NodeInput::Tokens(a));
        assert_eq!(parts[1].1, NodeInput::Tokens(b));
    }
}
