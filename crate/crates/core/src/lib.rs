//! Layout-aware information extraction from visually-rich documents.
//!
//! Fields are extracted as query-conditioned spans: every field owns a
//! learnable query vector, a bilinear scorer picks start and end tokens over
//! the encoded document, and multi-valued fields are decoded as chains where
//! the start token of each answer becomes the query for the next one. A
//! per-token BIO tagger over the same encoder is included as the baseline.

pub mod config;
pub mod datasets;
pub mod doc_model;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod numerics;
pub mod recursive;
pub mod seqlabel;
pub mod span_head;
pub mod train;
pub mod visualize;

pub use error::{Error, Result};
pub use exec::Execution;
