//! Keyword-driven hierarchical classification of repository records.
//!
//! Starting from nothing but a labeled category tree where every leaf names
//! a single seed keyword, this crate classifies repositories (description,
//! README, tags, owner, name) into that tree without any labeled training
//! data. The pipeline: build a heterogeneous network tying words to the
//! signals they co-occur with, embed all nodes into a shared sphere, grow
//! each leaf's keyword set, fit directional topic mixtures, synthesize
//! pseudo documents per class, and train a small text CNN per internal node
//! for top-down path prediction.
//!
//! See the `examples/` directory for one runnable example per stage.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod enrich;
pub mod error;
pub mod embedding;
pub mod eval;
pub mod fetch;
pub mod hin;
pub mod pipeline;
pub mod pseudogen;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
