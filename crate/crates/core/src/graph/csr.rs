use crate::error::{Error, Result};

/// Undirected graph in compressed sparse-row form.
///
/// Each undirected edge is stored in both directions, neighbor lists are
/// sorted ascending and contain neither duplicates nor self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    num_nodes: usize,
    num_edges: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrGraph {
    /// Builds the graph from an undirected edge list.
    ///
    /// Duplicate edges (in either orientation) collapse to one; self-loops
    /// are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::Range {
                        what: "node",
                        index: x,
                        limit: num_nodes,
                    });
                }
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut nbrs in adj {
            nbrs.sort_unstable();
            nbrs.dedup();
            col_idx.extend(nbrs);
            row_ptr.push(col_idx.len());
        }
        Ok(CsrGraph {
            num_nodes,
            num_edges: col_idx.len() / 2,
            row_ptr,
            col_idx,
        })
    }

    /// Single-node graphs, isolated nodes and so on.
    pub fn empty(num_nodes: usize) -> Self {
        CsrGraph {
            num_nodes,
            num_edges: 0,
            row_ptr: vec![0; num_nodes + 1],
            col_idx: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| u < v)
                .map(move |&v| (u, v))
        })
    }

    /// Checks every structural invariant; used by tests and after batching.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("invalid CSR: {m}")));
        if self.row_ptr.len() != self.num_nodes + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr length");
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_ptr decreasing");
        }
        if self.row_ptr[self.num_nodes] != self.col_idx.len() {
            return bad("row_ptr tail");
        }
        for u in 0..self.num_nodes {
            let nbrs = self.neighbors(u);
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return bad("unsorted or duplicate neighbors");
            }
            for &v in nbrs {
                if v >= self.num_nodes || v == u || !self.has_edge(v, u) {
                    return bad("asymmetric, self-loop or out-of-range entry");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let g = CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.num_edges(), 2);
        g.validate().unwrap();
    }

    #[test]
    fn duplicates_and_self_loops_are_dropped() {
        let g = CsrGraph::from_edges(3, &[(0, 1), (1, 0), (0, 1), (2, 2)]).unwrap();
        assert_eq!(g, CsrGraph::from_edges(3, &[(0, 1)]).unwrap());
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn out_of_range_node() {
        assert!(matches!(
            CsrGraph::from_edges(2, &[(0, 2)]),
            Err(Error::Range { index: 2, .. })
        ));
    }
}
