//! Adversarial feature augmentation for graph neural networks.
//!
//! The crate trains GCN, MLP and graph-classification models whose forward and
//! backward passes are written out by hand, so the gradient with respect to the
//! input node features is available to the augmentation strategies in
//! [`augment`]: multi-step ascent with accumulated parameter gradients (FLAG),
//! FreeLB, PGD, FGSM and "free" replay training.
//!
//! Module map:
//!
//! - [`graph`]: CSR storage, the self-loop normalized adjacency, sparse-dense
//!   products, node splits, graph batching and the text file formats.
//! - [`nn`]: dense matrices, layers, forward/backward, loss, dropout,
//!   embeddings, finite-difference checking and checkpoints.
//! - [`augment`]: perturbation state and the training-step strategies.
//! - [`train`]: configuration, optimizers, the epoch loop and model selection.
//! - [`experiment`]: single runs and sweeps that write CSV/JSON results.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
