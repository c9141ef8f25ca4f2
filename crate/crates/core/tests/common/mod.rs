//! Helpers shared by the integration tests.
#![allow(dead_code)]

use flag_core::graph::CsrGraph;
use flag_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with a random edge probability.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> CsrGraph {
    let n = rng.gen_range(1..=max_nodes);
    let p: f64 = rng.gen_range(0.0..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    CsrGraph::from_edges(n, &edges).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}` computed directly from the edge list.
pub fn dense_normalized(g: &CsrGraph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

pub fn dense_product(a: &[Vec<f64>], b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.len(), b.cols());
    for (i, row) in a.iter().enumerate() {
        for j in 0..b.cols() {
            out.row_mut(i)[j] = (0..b.rows()).map(|k| row[k] * b[(k, j)]).sum();
        }
    }
    out
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A random node-classification problem with an owned graph, features and
/// masks, plus a two-layer GCN.
pub struct NodeProblem {
    pub model: flag_core::nn::Model,
    pub adjacency: flag_core::graph::NormalizedAdjacency,
    pub input: flag_core::graph::NodeInput,
    pub labels: Vec<usize>,
    pub train: Vec<bool>,
}

impl NodeProblem {
    pub fn random(rng: &mut impl Rng, max_nodes: usize, dropout: f64) -> Self {
        let g = random_graph(rng, max_nodes);
        let n = g.num_nodes();
        let (d, hidden, c) = (rng.gen_range(1..6), rng.gen_range(2..6), rng.gen_range(2..5));
        let model = flag_core::nn::Model::gcn(&[d, hidden, c], dropout, rng).unwrap();
        let labels = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let mut train: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        train[0] = true;
        NodeProblem {
            model,
            adjacency: flag_core::graph::NormalizedAdjacency::from_graph(&g),
            input: flag_core::graph::NodeInput::Dense(random_matrix(rng, n, d)),
            labels,
            train,
        }
    }

    pub fn batch(&self) -> flag_core::augment::Batch<'_> {
        flag_core::augment::Batch {
            input: &self.input,
            structure: (&self.adjacency).into(),
            labels: &self.labels,
            loss_mask: &self.train,
            labeled_rows: Some(&self.train),
        }
    }
}

/// Random two-layer GCN instance whose hidden pre-activations all stay at
/// least `10·h` away from the ReLU kink. With dropout, the kink test runs
/// under the masks that the dropout stream of `seed` draws first.
pub fn kink_free_gcn(
    seed: u64,
    dropout: f64,
    h: f64,
) -> (
    flag_core::nn::Model,
    flag_core::graph::NormalizedAdjacency,
    Matrix,
    Vec<usize>,
    Vec<bool>,
) {
    use flag_core::graph::{NodeInput, NormalizedAdjacency};
    use flag_core::nn::{Layer, Mode, Model};
    use flag_core::rng::{stream, Stream};

    let mut r = rng(seed);
    loop {
        let g = random_graph(&mut r, 16);
        let n = g.num_nodes();
        let (d, hidden, c) = (r.gen_range(1..6), r.gen_range(2..6), r.gen_range(2..5));
        let model = Model::gcn(&[d, hidden, c], dropout, &mut r).unwrap();
        let x = random_matrix(&mut r, n, d);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.7)).collect();
        mask[0] = true;
        let s = NormalizedAdjacency::from_graph(&g);
        let input = NodeInput::Dense(x.clone());
        let mut drng = stream(seed, Stream::Dropout);
        let mut mode = if dropout > 0.0 { Mode::Train(&mut drng) } else { Mode::Eval };
        let zero = Matrix::zeros(n, d);
        let (_, tape) = model.forward(&input, Some(&zero), (&s).into(), &mut mode).unwrap();
        let relu_in = model.layers().iter().position(|l| matches!(l, Layer::Relu)).unwrap();
        if tape.activations[relu_in].as_slice().iter().all(|v| v.abs() > 10.0 * h) {
            return (model, s, x, labels, mask);
        }
    }
}
