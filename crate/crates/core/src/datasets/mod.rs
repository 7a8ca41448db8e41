//! Dataset containers, the synthetic generator, CORD import and the
//! JSON-lines persistence format.

mod cord;
mod jsonl;
mod synth;

use serde::{Deserialize, Serialize};

use crate::doc_model::{Document, FieldSchema};
use crate::error::{Error, Result};

pub use cord::{load_cord, CordLoad, CordOptions, CORD_CATEGORIES};
pub use jsonl::{load_jsonl, read_jsonl, save_jsonl, write_jsonl, JSONL_VERSION};
pub use synth::{gen_synthetic, gen_synthetic_split, LayoutStyle, Multiplicity, SplitSizes, SynthConfig, SynthField, ValueKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dataset_id: String,
    pub schema: FieldSchema,
    pub documents: Vec<Document>,
    pub split: Split,
}

impl Dataset {
    /// Builds a dataset, checking every annotation against the schema.
    pub fn new(schema: FieldSchema, documents: Vec<Document>, split: Split) -> Result<Self> {
        for d in &documents {
            for a in &d.annotations {
                if !schema.contains(&a.field_id) {
                    return Err(Error::Annotation(format!(
                        "{}: field `{}` not in schema of `{}`",
                        d.doc_id, a.field_id, schema.dataset_id
                    )));
                }
            }
        }
        Ok(Dataset {
            dataset_id: schema.dataset_id.clone(),
            schema,
            documents,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.documents
            .iter()
            .flat_map(|d| &d.annotations)
            .map(|a| a.spans.len())
            .sum()
    }

    /// Truncates every document to at most `max_seq_len - 1` real tokens.
    /// Returns the total number of dropped tokens.
    pub fn truncate(&mut self, max_seq_len: usize) -> usize {
        let max_real = max_seq_len.saturating_sub(1);
        let dropped: usize = self.documents.iter_mut().map(|d| d.truncate(max_real)).sum();
        if dropped > 0 {
            log::warn!("{}: truncated {dropped} tokens beyond max_seq_len {max_seq_len}", self.dataset_id);
        }
        dropped
    }
}
