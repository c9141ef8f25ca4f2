//! Forward pass with a tape of activations, and the matching analytic
//! backward pass.

use std::borrow::Cow;

use super::dropout::DropoutMask;
use super::embedding::{embed_backward, embed_discrete};
use super::model::{Layer, Model, ReadoutMode, Task};
use crate::error::{Error, Result};
use crate::graph::{GraphBatch, NodeInput, NormalizedAdjacency};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Graph structure a forward pass propagates over.
#[derive(Debug, Clone, Copy)]
pub enum Structure<'a> {
    /// One graph, node-level outputs.
    Node(&'a NormalizedAdjacency),
    /// Block-diagonal batch, one output row per graph after readout.
    Batch {
        adjacency: &'a NormalizedAdjacency,
        graph_id: &'a [usize],
        num_graphs: usize,
    },
}

impl<'a> Structure<'a> {
    pub fn adjacency(&self) -> &'a NormalizedAdjacency {
        match *self {
            Structure::Node(s) => s,
            Structure::Batch { adjacency, .. } => adjacency,
        }
    }
}

impl<'a> From<&'a NormalizedAdjacency> for Structure<'a> {
    fn from(s: &'a NormalizedAdjacency) -> Self {
        Structure::Node(s)
    }
}

impl<'a> From<&'a GraphBatch> for Structure<'a> {
    fn from(b: &'a GraphBatch) -> Self {
        Structure::Batch {
            adjacency: &b.adjacency,
            graph_id: &b.graph_id,
            num_graphs: b.num_graphs,
        }
    }
}

/// How dropout layers behave during a forward pass.
pub enum Mode<'a> {
    /// Dropout is the identity.
    Eval,
    /// Fresh masks drawn from the generator.
    Train(&'a mut SeededRng),
    /// Masks taken from an earlier tape, one per dropout layer; `None`
    /// entries act as identity.
    Replay(&'a [Option<DropoutMask>]),
}

/// Cached state of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape<'a> {
    /// `activations[0]` is the perturbed surface `H⁽⁰⁾ = X + δ` (or embedded
    /// tokens plus `δ`), borrowed from the input when nothing is added;
    /// `activations[k + 1]` is the output of layer `k`.
    pub activations: Vec<Cow<'a, Matrix>>,
    /// One entry per dropout layer, in layer order.
    pub masks: Vec<Option<DropoutMask>>,
    input: &'a NodeInput,
    structure: Structure<'a>,
}

impl ForwardTape<'_> {
    pub fn logits(&self) -> &Matrix {
        self.activations.last().expect("tape is never empty")
    }
}

/// Parameter gradients in [`Model::params`] order, and the gradient with
/// respect to `H⁽⁰⁾` (equal to the gradient with respect to `δ`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub d_input: Option<Matrix>,
}

impl Model {
    /// The matrix a perturbation is added to: raw features, or the embedded
    /// tokens for models with an embedding table.
    pub fn surface(&self, input: &NodeInput) -> Result<Matrix> {
        match (input, self.embedding()) {
            (NodeInput::Dense(x), None) => {
                if x.cols() != self.input_dim() {
                    return Err(Error::dim(format!(
                        "features have {} columns, model expects {}",
                        x.cols(),
                        self.input_dim()
                    )));
                }
                Ok(x.clone())
            }
            (NodeInput::Tokens(t), Some(table)) => embed_discrete(t, table),
            (NodeInput::Dense(_), Some(_)) => Err(Error::dim("model embeds tokens but got dense features")),
            (NodeInput::Tokens(_), None) => Err(Error::dim("model takes dense features but got tokens")),
        }
    }

    /// Shape of the perturbation surface for this input.
    pub fn surface_shape(&self, input: &NodeInput) -> (usize, usize) {
        (input.num_rows(), self.input_dim())
    }

    /// `H⁽⁰⁾ = surface + δ`; borrows dense features when there is no `δ`.
    fn perturbed_surface<'a>(&self, input: &'a NodeInput, delta: Option<&Matrix>) -> Result<Cow<'a, Matrix>> {
        let h0 = match (input, delta, self.embedding()) {
            (NodeInput::Dense(x), None, None) if x.cols() == self.input_dim() => Cow::Borrowed(x),
            (NodeInput::Dense(x), Some(d), None) if x.cols() == self.input_dim() => Cow::Owned(x.add(d)?),
            _ => {
                let mut h = self.surface(input)?;
                if let Some(d) = delta {
                    h.add_assign(d)?;
                }
                Cow::Owned(h)
            }
        };
        h0.ensure_finite("model input")?;
        Ok(h0)
    }

    fn check_structure(&self, input: &NodeInput, structure: Structure<'_>) -> Result<()> {
        let n = input.num_rows();
        if structure.adjacency().num_nodes() != n {
            return Err(Error::dim(format!(
                "{n} input rows on a graph of {} nodes",
                structure.adjacency().num_nodes()
            )));
        }
        match (self.task(), structure) {
            (Task::GraphClassification, Structure::Node(_)) => Err(Error::dim("graph classifier needs a graph batch")),
            (Task::NodeClassification, Structure::Batch { .. }) => Err(Error::dim("node classifier got a graph batch")),
            _ => Ok(()),
        }
    }

    /// Evaluation-mode logits without keeping a tape.
    pub fn predict(&self, input: &NodeInput, structure: Structure<'_>) -> Result<Matrix> {
        self.check_structure(input, structure)?;
        let mut h = self.perturbed_surface(input, None)?;
        for layer in self.layers() {
            if !matches!(layer, Layer::Dropout(_)) {
                h = Cow::Owned(apply_layer(layer, &h, structure)?);
            }
        }
        Ok(h.into_owned())
    }

    pub fn forward<'a>(
        &self,
        input: &'a NodeInput,
        delta: Option<&Matrix>,
        structure: Structure<'a>,
        mode: &mut Mode<'_>,
    ) -> Result<(Matrix, ForwardTape<'a>)> {
        self.check_structure(input, structure)?;
        let h0 = self.perturbed_surface(input, delta)?;

        let mut activations = Vec::with_capacity(self.layers().len() + 1);
        let mut masks = Vec::new();
        activations.push(h0);
        let mut replay_idx = 0;
        for layer in self.layers() {
            let h = activations.last().expect("non-empty");
            let next = match layer {
                Layer::Gcn(_) | Layer::Dense(_) | Layer::Relu | Layer::Readout(_) => {
                    apply_layer(layer, h, structure)?
                }
                Layer::Dropout(p) => {
                    let mask = match mode {
                        Mode::Eval => None,
                        Mode::Train(rng) => Some(DropoutMask::sample(h.as_slice().len(), *p, *rng)?),
                        Mode::Replay(saved) => {
                            let m = saved.get(replay_idx).ok_or_else(|| {
                                Error::dim(format!("no replay mask for dropout layer {replay_idx}"))
                            })?;
                            m.clone()
                        }
                    };
                    replay_idx += 1;
                    let out = match &mask {
                        Some(m) => m.apply(h)?,
                        None => h.clone().into_owned(),
                    };
                    masks.push(mask);
                    out
                }
            };
            activations.push(Cow::Owned(next));
        }
        let logits = activations.last().expect("non-empty").clone().into_owned();
        Ok((
            logits,
            ForwardTape {
                activations,
                masks,
                input,
                structure,
            },
        ))
    }

    /// Reverse pass through `tape`.
    ///
    /// The gradient with respect to `H⁽⁰⁾` is only formed when `want_input`
    /// is set or the model has an embedding table (which needs it).
    pub fn backward(&self, tape: &ForwardTape<'_>, d_logits: &Matrix, want_input: bool) -> Result<Gradients> {
        let layers = self.layers();
        if tape.activations.len() != layers.len() + 1 {
            return Err(Error::dim("tape does not match model"));
        }
        if d_logits.shape() != tape.logits().shape() {
            return Err(Error::dim(format!(
                "d_logits {:?} vs logits {:?}",
                d_logits.shape(),
                tape.logits().shape()
            )));
        }
        let need_input = want_input || self.embedding().is_some();
        let first_affine = layers
            .iter()
            .position(|l| l.affine().is_some())
            .expect("validated");

        let mut params = self.zero_grads();
        let mut slot = params.len();
        let mut mask_idx = tape.masks.len();
        let mut grad = d_logits.clone();

        for (k, layer) in layers.iter().enumerate().rev() {
            if k < first_affine && !need_input {
                break;
            }
            let h = &tape.activations[k];
            match layer {
                Layer::Gcn(a) => {
                    // S is symmetric: the adjoint of X ↦ S·X·W is G ↦ S·G·Wᵀ
                    let g = tape.structure.adjacency().spmm(&grad)?;
                    slot -= 2;
                    params[slot] = h.matmul_tn(&g)?.into_vec();
                    params[slot + 1] = grad.column_sums();
                    if k > first_affine || need_input {
                        grad = g.matmul_nt(&a.weight)?;
                    }
                }
                Layer::Dense(a) => {
                    slot -= 2;
                    params[slot] = h.matmul_tn(&grad)?.into_vec();
                    params[slot + 1] = grad.column_sums();
                    if k > first_affine || need_input {
                        grad = grad.matmul_nt(&a.weight)?;
                    }
                }
                Layer::Relu => {
                    // subgradient 0 at the kink
                    for (g, &x) in grad.as_mut_slice().iter_mut().zip(h.as_slice()) {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Layer::Dropout(_) => {
                    mask_idx -= 1;
                    if let Some(m) = &tape.masks[mask_idx] {
                        m.apply_in_place(&mut grad)?;
                    }
                }
                Layer::Readout(mode) => {
                    let Structure::Batch {
                        graph_id,
                        num_graphs,
                        ..
                    } = tape.structure
                    else {
                        return Err(Error::dim("readout tape without a graph batch"));
                    };
                    grad = readout_backward(&grad, graph_id, num_graphs, *mode);
                }
            }
        }

        let d_input = if need_input { Some(grad) } else { None };
        if let (Some(table), Some(d)) = (self.embedding(), &d_input) {
            let NodeInput::Tokens(tokens) = tape.input else {
                return Err(Error::dim("embedding model taped without tokens"));
            };
            params[0] = embed_backward(tokens, d, table.rows()).into_vec();
        }
        Ok(Gradients {
            params,
            d_input: if want_input { d_input } else { None },
        })
    }
}

/// Every layer but dropout, which needs a mode.
fn apply_layer(layer: &Layer, h: &Matrix, structure: Structure<'_>) -> Result<Matrix> {
    Ok(match layer {
        Layer::Gcn(a) => {
            let mut z = structure.adjacency().spmm(&h.matmul(&a.weight)?)?;
            z.add_row_vector(&a.bias)?;
            z
        }
        Layer::Dense(a) => {
            let mut z = h.matmul(&a.weight)?;
            z.add_row_vector(&a.bias)?;
            z
        }
        Layer::Relu => h.map(|v| if v > 0.0 { v } else { 0.0 }),
        Layer::Readout(mode) => {
            let Structure::Batch {
                graph_id, num_graphs, ..
            } = structure
            else {
                return Err(Error::dim("readout needs a graph batch"));
            };
            readout(h, graph_id, num_graphs, *mode)
        }
        Layer::Dropout(_) => h.clone(),
    })
}

fn graph_sizes(graph_id: &[usize], num_graphs: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; num_graphs];
    for &g in graph_id {
        sizes[g] += 1;
    }
    sizes
}

/// Pools node rows into one row per graph; an empty graph pools to zeros.
pub fn readout(h: &Matrix, graph_id: &[usize], num_graphs: usize, mode: ReadoutMode) -> Matrix {
    let mut out = Matrix::zeros(num_graphs, h.cols());
    for (i, &g) in graph_id.iter().enumerate() {
        for (o, v) in out.row_mut(g).iter_mut().zip(h.row(i)) {
            *o += v;
        }
    }
    if mode == ReadoutMode::Mean {
        for (g, &size) in graph_sizes(graph_id, num_graphs).iter().enumerate() {
            if size > 0 {
                let inv = 1.0 / size as f64;
                out.row_mut(g).iter_mut().for_each(|v| *v *= inv);
            }
        }
    }
    out
}

fn readout_backward(d_out: &Matrix, graph_id: &[usize], num_graphs: usize, mode: ReadoutMode) -> Matrix {
    let sizes = graph_sizes(graph_id, num_graphs);
    let mut grad = Matrix::zeros(graph_id.len(), d_out.cols());
    for (i, &g) in graph_id.iter().enumerate() {
        let scale = match mode {
            ReadoutMode::Sum => 1.0,
            ReadoutMode::Mean => 1.0 / sizes[g] as f64,
        };
        for (d, v) in grad.row_mut(i).iter_mut().zip(d_out.row(g)) {
            *d = v * scale;
        }
    }
    grad
}
