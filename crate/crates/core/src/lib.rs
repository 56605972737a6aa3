//! Diverse negative sampling for graph convolutional networks.
//!
//! The crate builds, for every anchor node of a graph, a set of *negative*
//! nodes drawn from a k-determinantal point process whose L-ensemble mixes
//! community structure with node embeddings, and feeds those negatives into
//! a graph convolution that subtracts them from the usual neighbourhood
//! aggregation.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`]: dense matrices, Jacobi eigensolver, elementary symmetric
//!   polynomials, LU determinants;
//! * [`graph`]: CSR graphs, BFS shells, JSON I/O, stochastic block models;
//! * [`community`]: semi-synchronous label propagation;
//! * [`dpp`]: L-ensemble builders and the exact k-DPP sampler;
//! * [`negsamp`]: per-anchor negative tables;
//! * [`gnn`]: the network, its gradients, Adam and the training loop;
//! * [`metrics`]: accuracy and mean average distance.
//!
//! The `book/` directory at the repository root walks through each of
//! these with runnable examples.

pub mod community;
pub mod dpp;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod negsamp;
pub mod rng;

pub use error::{Error, Result};
pub use graph::Graph;
pub use linalg::Matrix;

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/communities.md")]
    mod communities {}
    #[doc = include_str!("../../../book/src/kdpp.md")]
    mod kdpp {}
    #[doc = include_str!("../../../book/src/negatives.md")]
    mod negatives {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
