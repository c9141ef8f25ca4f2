use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NodeClassification,
    GraphClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    Mean,
    Sum,
}

/// Weight matrix (`d_in × d_out`) and bias (`d_out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Affine {
            weight: glorot(d_in, d_out, rng),
            bias: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `S · H · W + b`.
    Gcn(Affine),
    /// `H · W + b`, ignores the graph.
    Dense(Affine),
    Relu,
    /// Inverted dropout with drop probability `p`.
    Dropout(f64),
    /// Pools node rows into one row per graph.
    Readout(ReadoutMode),
}

impl Layer {
    pub fn affine(&self) -> Option<&Affine> {
        match self {
            Layer::Gcn(a) | Layer::Dense(a) => Some(a),
            _ => None,
        }
    }

    fn affine_mut(&mut self) -> Option<&mut Affine> {
        match self {
            Layer::Gcn(a) | Layer::Dense(a) => Some(a),
            _ => None,
        }
    }
}

/// A layer stack with an optional token embedding table in front.
///
/// Parameters are enumerated in a fixed order: embedding table (if any), then
/// weight and bias of every affine layer from input to output. Gradients,
/// optimizer state and checkpoints all use this order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    embedding: Option<Matrix>,
    layers: Vec<Layer>,
    task: Task,
}

impl Model {
    pub fn new(embedding: Option<Matrix>, layers: Vec<Layer>, task: Task) -> Result<Self> {
        let model = Model {
            embedding,
            layers,
            task,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut width = self.embedding.as_ref().map(|t| t.cols());
        let mut readouts = 0;
        let mut seen_graph_after_readout = false;
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Gcn(a) | Layer::Dense(a) => {
                    if a.bias.len() != a.d_out() {
                        return Err(Error::Config(format!("layer {k}: bias length")));
                    }
                    if let Some(w) = width {
                        if w != a.d_in() {
                            return Err(Error::Config(format!(
                                "layer {k}: input dim {} does not follow previous width {w}",
                                a.d_in()
                            )));
                        }
                    }
                    width = Some(a.d_out());
                    if readouts > 0 && matches!(layer, Layer::Gcn(_)) {
                        seen_graph_after_readout = true;
                    }
                }
                Layer::Dropout(p) => {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::Config(format!("layer {k}: dropout p = {p} not in [0, 1)")));
                    }
                }
                Layer::Readout(_) => readouts += 1,
                Layer::Relu => {}
            }
        }
        if self.affine_layers().next().is_none() {
            return Err(Error::Config("model has no weight layers".into()));
        }
        match self.task {
            Task::NodeClassification if readouts != 0 => {
                Err(Error::Config("readout is only valid for graph classification".into()))
            }
            Task::GraphClassification if readouts != 1 => {
                Err(Error::Config("graph classification needs exactly one readout".into()))
            }
            _ if seen_graph_after_readout => {
                Err(Error::Config("readout must follow the last graph layer".into()))
            }
            _ => Ok(()),
        }
    }

    /// GCN with the given layer widths, e.g. `[d, 16, C]`.
    ///
    /// Dropout (when `p > 0`) precedes every layer and ReLU follows every
    /// layer but the last.
    pub fn gcn<R: Rng + ?Sized>(dims: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        Self::stack(dims, dropout, rng, Layer::Gcn)
    }

    /// Same layout as [`Model::gcn`] with dense layers that ignore the graph.
    pub fn mlp<R: Rng + ?Sized>(dims: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        Self::stack(dims, dropout, rng, Layer::Dense)
    }

    fn stack<R: Rng + ?Sized>(
        dims: &[usize],
        dropout: f64,
        rng: &mut R,
        make: fn(Affine) -> Layer,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("need at least input and output widths".into()));
        }
        let mut layers = Vec::new();
        for (k, w) in dims.windows(2).enumerate() {
            if dropout > 0.0 {
                layers.push(Layer::Dropout(dropout));
            }
            layers.push(make(Affine::glorot(w[0], w[1], rng)));
            if k + 2 < dims.len() {
                layers.push(Layer::Relu);
            }
        }
        Model::new(None, layers, Task::NodeClassification)
    }

    /// Token embedding, GCN layers with ReLU, readout, then a dense
    /// classifier head.
    pub fn graph_classifier<R: Rng + ?Sized>(
        vocab: usize,
        embed_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        dropout: f64,
        readout: ReadoutMode,
        rng: &mut R,
    ) -> Result<Self> {
        let table = glorot(vocab, embed_dim, rng);
        let mut layers = Vec::new();
        let mut width = embed_dim;
        for &h in hidden {
            if dropout > 0.0 {
                layers.push(Layer::Dropout(dropout));
            }
            layers.push(Layer::Gcn(Affine::glorot(width, h, rng)));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Readout(readout));
        if dropout > 0.0 {
            layers.push(Layer::Dropout(dropout));
        }
        layers.push(Layer::Dense(Affine::glorot(width, num_classes, rng)));
        Model::new(Some(table), layers, Task::GraphClassification)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn embedding(&self) -> Option<&Matrix> {
        self.embedding.as_ref()
    }

    pub fn affine_layers(&self) -> impl Iterator<Item = &Affine> {
        self.layers.iter().filter_map(Layer::affine)
    }

    /// Width of the first layer's input (the perturbation surface).
    pub fn input_dim(&self) -> usize {
        match &self.embedding {
            Some(t) => t.cols(),
            None => self.affine_layers().next().map_or(0, Affine::d_in),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.affine_layers().last().map_or(0, Affine::d_out)
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.embedding.as_ref().map(Matrix::rows)
    }

    /// `(rows, cols)` of every parameter tensor; biases are `(1, d)`.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if let Some(t) = &self.embedding {
            out.push(t.shape());
        }
        for a in self.affine_layers() {
            out.push(a.weight.shape());
            out.push((1, a.bias.len()));
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(t) = &self.embedding {
            out.push(t.as_slice());
        }
        for a in self.affine_layers() {
            out.push(a.weight.as_slice());
            out.push(&a.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(t) = &mut self.embedding {
            out.push(t.as_mut_slice());
        }
        for a in self.layers.iter_mut().filter_map(Layer::affine_mut) {
            out.push(a.weight.as_mut_slice());
            out.push(&mut a.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Zero-filled buffers shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }
}
