//! Fair, relatively balanced hierarchical clustering.
//!
//! Starting from any (typically unfair) dendrogram, [`fairify::make_fair`]
//! rewrites the tree top-down with two operators, subtree
//! deletion/insertion and shallow folding, so that every split is
//! ε-relatively balanced and every cluster's color proportions stay close to
//! the dataset's. The rest of the crate supplies the pieces needed to run
//! and measure that end to end: Dasgupta cost, average linkage for the
//! vanilla input, CSV ingestion and seeded subsampling, and experiment
//! metrics.

pub mod balance;
pub mod cost;
pub mod data;
pub mod error;
pub mod fairify;
pub mod graph;
pub mod linkage;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod random;
pub mod synth;
pub mod tree;

pub use balance::{cluster_balance, is_fair, is_relatively_balanced, FairnessReport, FairnessSpec};
pub use cost::{edge_cost, total_cost};
pub use error::{Error, Result};
pub use fairify::{make_fair, split_root, FairParams};
pub use graph::SimilarityGraph;
pub use tree::{Dendrogram, NodeId};
