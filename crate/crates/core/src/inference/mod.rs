//! MAP decoding over candidate spaces.
//!
//! A scored [`CandidateSpace`](crate::CandidateSpace) becomes a
//! [`FactorGraph`] of binary part variables. [`ad3_solve`] solves its linear
//! relaxation by dual decomposition and closes any remaining gap by branching;
//! [`brute_force_map`] is an exhaustive reference for small graphs.

mod ad3;
mod brute;
mod decode;
mod factor_graph;
mod semimarkov;

pub use ad3::{ad3_solve, Ad3Config, SolveResult, SolveStatus};
pub use brute::{brute_force_map, BruteLimits};
pub use decode::{
    cost_augment, decode, drop_sparse_cross_task, CostScope, DecodeConfig, DecodeMode, Decoded,
};
pub use factor_graph::{Constraints, Factor, FactorGraph, Literal, SpanVar};
pub use semimarkov::{semi_markov_map, semi_markov_marginals, Marginals, ScoredSpan};
