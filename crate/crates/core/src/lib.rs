//! Causal effect identification from heterogeneous data sources.
//!
//! The crate decides whether `p(Y | do(X))` can be computed from a set of
//! observational and experimental distributions `p(A | do(B), C)` over a
//! causal graph with latent confounders. Before searching it can shrink the
//! problem by pruning irrelevant vertices and by collapsing transit
//! clusters, and it maps any answer back to the original problem.

mod audit;
pub mod clustering;
pub mod distributions;
pub mod graph;
pub mod identify;
pub mod invariance;
pub mod pipeline;
pub mod problem;
pub mod pruning;
pub mod sim;

pub use audit::ConditionCheck;
pub use distributions::{Distribution, Query, VarSet};
pub use graph::{CausalGraph, VertexSet};
pub use identify::{identify, Functional, IdStatus, IdentifyResult, SearchBudget};
