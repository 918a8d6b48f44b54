//! Graph independent subnetwork training for graph convolutional networks.
//!
//! The hidden feature space of a GCN is split into disjoint blocks, one
//! narrow sub-network is trained per block for a few local steps, and the
//! trained blocks are written back into the global model.

pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod orchestrator;
pub mod partition;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{AdjacencyMode, Graph};
pub use model::{Arch, GcnModel, NodeFeatures};
pub use tensor::{DenseMatrix, Scalar, SparseMatrix};
