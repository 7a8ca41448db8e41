use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::geometry::BoundingBox;
use crate::error::{Error, Result};

/// Text of the reserved token at position 0.
pub const NULL_TOKEN_TEXT: &str = "[NULL]";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub line_id: u32,
}

impl Token {
    pub fn null() -> Self {
        Token {
            text: NULL_TOKEN_TEXT.to_string(),
            bbox: BoundingBox::NULL,
            line_id: 0,
        }
    }
}

/// Inclusive token range. Indices count the null token as position 0, so
/// real tokens start at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const NULL: Span = Span { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn is_null(&self) -> bool {
        self.start == 0 && self.end == 0
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// All gold spans of one field in one document, in chain order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub field_id: String,
    pub spans: Vec<Span>,
}

/// The extraction targets of one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub dataset_id: String,
    pub field_ids: Vec<String>,
}

impl FieldSchema {
    /// Builds a schema, checking that field ids are unique and carry the
    /// `"<dataset_id>/"` namespace prefix.
    pub fn new(dataset_id: impl Into<String>, field_ids: Vec<String>) -> Result<Self> {
        let dataset_id = dataset_id.into();
        let prefix = format!("{dataset_id}/");
        let mut seen = HashSet::new();
        for f in &field_ids {
            if !f.starts_with(&prefix) || f.len() == prefix.len() {
                return Err(Error::Config(format!(
                    "field `{f}` is not namespaced under `{prefix}`"
                )));
            }
            if !seen.insert(f.as_str()) {
                return Err(Error::Config(format!("duplicate field `{f}`")));
            }
        }
        Ok(FieldSchema { dataset_id, field_ids })
    }

    pub fn contains(&self, field_id: &str) -> bool {
        self.field_ids.iter().any(|f| f == field_id)
    }

    pub fn len(&self) -> usize {
        self.field_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field_ids.is_empty()
    }
}

/// A tokenized page. `tokens[0]` is always the null token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub page_width: u32,
    pub page_height: u32,
    tokens: Vec<Token>,
    pub annotations: Vec<EntityAnnotation>,
}

impl Document {
    /// Builds a document from real tokens in reading order; the null token
    /// is prepended here.
    pub fn new(
        doc_id: impl Into<String>,
        page_width: u32,
        page_height: u32,
        real_tokens: Vec<Token>,
        annotations: Vec<EntityAnnotation>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        if let Some(i) = real_tokens.iter().position(|t| t.text.is_empty()) {
            return Err(Error::Annotation(format!("{doc_id}: token {} has empty text", i + 1)));
        }
        let mut tokens = Vec::with_capacity(real_tokens.len() + 1);
        tokens.push(Token::null());
        tokens.extend(real_tokens);
        let doc = Document {
            doc_id,
            page_width,
            page_height,
            tokens,
            annotations,
        };
        doc.validate_annotations()?;
        Ok(doc)
    }

    fn validate_annotations(&self) -> Result<()> {
        let n = self.num_real_tokens();
        let mut fields = HashSet::new();
        for ann in &self.annotations {
            if !fields.insert(ann.field_id.as_str()) {
                return Err(Error::Annotation(format!(
                    "{}: field `{}` annotated twice",
                    self.doc_id, ann.field_id
                )));
            }
            for (i, s) in ann.spans.iter().enumerate() {
                if s.start < 1 || s.start > s.end || s.end > n {
                    return Err(Error::Annotation(format!(
                        "{}: span [{}, {}] of `{}` invalid for {} tokens",
                        self.doc_id, s.start, s.end, ann.field_id, n
                    )));
                }
                if ann.spans[..i].iter().any(|o| o.overlaps(s)) {
                    return Err(Error::Annotation(format!(
                        "{}: overlapping spans in `{}`",
                        self.doc_id, ann.field_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// All tokens including the null token at index 0.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn real_tokens(&self) -> &[Token] {
        &self.tokens[1..]
    }

    pub fn num_real_tokens(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Sequence length seen by the model (real tokens plus null).
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn annotation(&self, field_id: &str) -> Option<&EntityAnnotation> {
        self.annotations.iter().find(|a| a.field_id == field_id)
    }

    /// Gold spans of a field; empty when the field is absent.
    pub fn gold_spans(&self, field_id: &str) -> &[Span] {
        self.annotation(field_id).map_or(&[], |a| a.spans.as_slice())
    }

    /// Keeps the first `max_real` real tokens. Spans reaching past the cut
    /// are dropped; annotations left without spans are removed. Returns the
    /// number of tokens removed.
    pub fn truncate(&mut self, max_real: usize) -> usize {
        let n = self.num_real_tokens();
        if n <= max_real {
            return 0;
        }
        self.tokens.truncate(max_real + 1);
        for ann in &mut self.annotations {
            ann.spans.retain(|s| s.end <= max_real);
        }
        self.annotations.retain(|a| !a.spans.is_empty());
        n - max_real
    }

    /// Every annotation re-sorted into chain order.
    pub fn with_chain_order(mut self) -> Self {
        let anns = std::mem::take(&mut self.annotations);
        self.annotations = anns.iter().map(|a| gold_chain_order(a, &self)).collect();
        self
    }
}

/// Orders spans top-to-bottom, then left-to-right, by the box of each span's
/// start token; ties keep token-index order.
pub fn gold_chain_order(annotation: &EntityAnnotation, doc: &Document) -> EntityAnnotation {
    let mut spans = annotation.spans.clone();
    spans.sort_by_key(|s| {
        let b = doc.tokens().get(s.start).map_or(BoundingBox::NULL, |t| t.bbox);
        (b.y0, b.x0, s.start)
    });
    EntityAnnotation {
        field_id: annotation.field_id.clone(),
        spans,
    }
}
