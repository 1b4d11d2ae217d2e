//! Self-supervised taxonomy expansion.
//!
//! Given an existing taxonomy (a DAG of concepts with initial embeddings) and
//! a set of new concepts, this crate learns where each new concept belongs.
//! Every existing node is treated as a candidate *anchor* (parent). An anchor
//! is represented by its ego network (its parents, itself and its children,
//! each tagged with a relative position) encoded by a position-enhanced graph
//! neural network. A matching module scores anchor–query pairs.
//!
//! Training needs no labels: every edge of the existing taxonomy becomes one
//! positive ⟨anchor, query⟩ pair grouped with sampled negatives, and the model
//! is fit with the InfoNCE objective. At inference all anchor representations
//! are computed once and cached, so ranking a query costs one matcher pass per
//! anchor.
//!
//! Module map:
//!
//! * [`taxonomy`], [`embedding`], [`split`], [`io`]: data model and files
//! * [`diff`]: a small reverse-mode differentiation tape over dense matrices
//! * [`egonet`]: ego-network extraction and batching
//! * [`model`]: propagation (GCN/GAT and position-enhanced variants), readout, matching
//! * [`train`]: self-supervision, losses, Adam, plateau scheduling, the fit loop
//! * [`infer`], [`baselines`], [`metrics`], [`clean`]: ranking, expansion, evaluation, self-cleaning
//! * [`synthetic`]: benchmark taxonomies with controllable structure

pub mod baselines;
pub mod checkpoint;
pub mod clean;
pub mod diff;
pub mod egonet;
pub mod embedding;
mod error;
pub mod infer;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod split;
pub mod synthetic;
pub mod taxonomy;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeedStream;
pub use taxonomy::{Concept, ConceptId, Taxonomy};

// Book chapters are compiled as doctests so their snippets stay runnable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/taxonomy.md")]
    mod taxonomy {}
    #[doc = include_str!("../../../book/src/differentiation.md")]
    mod differentiation {}
    #[doc = include_str!("../../../book/src/egonets.md")]
    mod egonets {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cleaning.md")]
    mod cleaning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
