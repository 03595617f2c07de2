//! Joint frame-semantic role labeling and semantic dependency parsing.
//!
//! The two parsers are trained from disjoint corpora. When a sentence only
//! carries frame annotations, its dependency graph is treated as a latent
//! structure; cross-task parts tie frame arguments to unlabeled arcs from the
//! target. Decoding runs AD³ over a factor graph of logic, pairwise and
//! semi-Markov factors, and training minimizes a (latent) structured hinge
//! loss with an ℓ1 penalty that sparsifies cross-task scores.

pub mod autodiff;
pub mod encoder;
mod error;
pub mod eval;
pub mod inference;
pub mod io;
pub mod model;
pub mod pruning;
pub mod scorers;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use model::{
    weighted_hamming, Arc, Argument, CandidateSpace, CostConfig, DependencyGraph, FrameParse,
    Ontology, Part, PartId, Sentence, SpaceLimits, Supervision, Target, Token,
};
