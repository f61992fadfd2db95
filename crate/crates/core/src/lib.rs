//! Graph-based approximate nearest neighbor search.
//!
//! The crate builds and queries three kinds of proximity graphs over a
//! point set under the l2 metric:
//!
//! * exact kNN graphs and nn-descent approximations ([`knn`]),
//! * the monotonic relative neighborhood graph and the relative
//!   neighborhood graph, built exhaustively for small sets ([`mrng`]),
//! * NSG, a degree-capped approximation of
//!   the MRNG that is searched from a single fixed entry node ([`nsg`]).
//!
//! Every graph is searched with the same greedy best-first routine
//! ([`search`]). [`analysis`] measures structural properties of a built
//! graph and [`bench`] drives precision/QPS experiments.
//!
//! All comparisons inside the crate use squared distances; the true
//! distance is only materialized in results handed back to callers.

pub mod analysis;
pub mod bench;
pub mod dataset;
mod error;
pub mod graph;
pub mod io;
pub mod knn;
pub mod metric;
pub mod mrng;
pub mod nsg;
mod par;
pub mod search;

pub use dataset::{Dataset, PointId};
pub use error::{Error, Result};
pub use graph::{DirectedGraph, Neighbor};
pub use knn::KnnGraph;
pub use nsg::NsgIndex;
pub use search::{SearchParams, SearchStats};
