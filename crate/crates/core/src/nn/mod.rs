//! Models with hand-written forward and backward passes.

pub mod checkpoint;
mod dropout;
mod embedding;
mod forward;
mod gradcheck;
mod loss;
mod model;

pub use dropout::{dropout_apply, DropoutMask};
pub use embedding::{embed_backward, embed_discrete};
pub use forward::{readout, ForwardTape, Gradients, Mode, Structure};
pub use gradcheck::{grad_check, CheckMode, GradCheckReport};
pub use loss::softmax_cross_entropy;
pub use model::{Affine, Layer, Model, ReadoutMode, Task};
