//! Multihop question answering over a dynamic multimodal knowledge graph.
//!
//! The crate is organized along the request path:
//!
//! - [`graph`]: the editable triple store with alias tables and image bindings
//! - [`retrieval`]: cosine scoring, the cross-modal entity index, snippet ranking
//! - [`gateway`]: the single contract for every learned component, with a
//!   deterministic mock backend and an HTTP client backend
//! - [`reasoner`]: relation-linking and retrieval-augmented answer paths plus
//!   the reflective decision between them
//! - [`pipeline`]: question decomposition and per-hop dispatch
//! - [`eval`]: dataset loading and alias-aware M-Acc / H-Acc / I-Acc
//! - [`cli`]: the `dmkg` command line
//!
//! Data-parallel loops (index builds, exhaustive scans, batch solving) run on
//! rayon when the `parallel` feature is on (the default) and fall back to
//! plain iterators otherwise.

pub mod cli;
pub mod eval;
pub mod fixtures;
pub mod gateway;
pub mod graph;
pub mod normalize;
pub mod par;
pub mod pipeline;
pub mod reasoner;
pub mod retrieval;

pub use graph::{EditQuadruple, EntityId, ImageRef, KnowledgeGraph};
pub use normalize::Normalizer;
