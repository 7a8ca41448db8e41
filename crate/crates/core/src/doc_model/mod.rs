//! Documents, geometry, and gold annotations.

mod document;
mod geometry;
mod vocab;

pub use document::{gold_chain_order, Document, EntityAnnotation, FieldSchema, Span, Token, NULL_TOKEN_TEXT};
pub use geometry::{normalize_box, split_line_to_words, BoundingBox, PixelBox, GRID_MAX};
pub use vocab::{tokenize, Tokenized, Vocab, NULL_ID, PAD_ID, UNK_ID};

/// Default maximum sequence length, null token included.
pub const DEFAULT_MAX_SEQ_LEN: usize = 512;
