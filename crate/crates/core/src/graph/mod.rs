//! Graph storage and propagation.

mod adjacency;
mod batch;
mod csr;
pub mod io;
mod split;

pub use adjacency::NormalizedAdjacency;
pub use batch::{batch_graphs, GraphBatch, NodeInput, TokenRows};
pub use csr::CsrGraph;
pub use io::{load_features, load_graph, load_labels, load_split};
pub use split::NodeSplit;
