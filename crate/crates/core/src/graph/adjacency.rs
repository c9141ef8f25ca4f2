use rayon::prelude::*;

use super::CsrGraph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` in CSR form, with `d̃_u = deg(u) + 1`.
///
/// Every diagonal entry is present. The matrix is symmetric, so products
/// with its transpose reuse [`NormalizedAdjacency::spmm`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &CsrGraph) -> Self {
        let n = g.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt())
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(g.col_idx().len() + n);
        let mut values = Vec::with_capacity(g.col_idx().len() + n);
        row_ptr.push(0);
        for u in 0..n {
            let nbrs = g.neighbors(u);
            // neighbors are sorted and never contain u; splice the diagonal in
            let split = nbrs.partition_point(|&v| v < u);
            let row = nbrs[..split]
                .iter()
                .copied()
                .chain(std::iter::once(u))
                .chain(nbrs[split..].iter().copied());
            for v in row {
                col_idx.push(v);
                values.push(inv_sqrt[u] * inv_sqrt[v]);
            }
            row_ptr.push(col_idx.len());
        }
        NormalizedAdjacency {
            num_nodes: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of row `u` as `(column, value)`.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[u]..self.row_ptr[u + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Entry `(u, v)`, zero when not stored.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        let r = self.row_ptr[u]..self.row_ptr[u + 1];
        match self.col_idx[r.clone()].binary_search(&v) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for u in 0..self.num_nodes {
            for (v, w) in self.row(u) {
                m[(u, v)] = w;
            }
        }
        m
    }

    /// `S · H`.
    ///
    /// Rows are computed in parallel; each output row is reduced serially in
    /// column-index order, so the result does not depend on the thread count.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.num_nodes {
            return Err(Error::dim(format!(
                "spmm: adjacency over {} nodes, features with {} rows",
                self.num_nodes,
                h.rows()
            )));
        }
        let d = h.cols();
        let mut out = Matrix::zeros(self.num_nodes, d);
        if d == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(u, out_row)| {
                for (v, w) in self.row(u) {
                    for (o, x) in out_row.iter_mut().zip(h.row(v)) {
                        *o += w * x;
                    }
                }
            });
        Ok(out)
    }
}
