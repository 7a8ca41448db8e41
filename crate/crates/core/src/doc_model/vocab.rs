use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::document::{Document, Token, NULL_TOKEN_TEXT};
use super::geometry::BoundingBox;

pub const PAD_ID: usize = 0;
pub const NULL_ID: usize = 1;
pub const UNK_ID: usize = 2;

const SPECIALS: [&str; 3] = ["[PAD]", NULL_TOKEN_TEXT, "[UNK]"];

/// Closed whole-word vocabulary. Ids 0..3 are pad, null and unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from(Vec::new())
    }
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let mut v = Vocab {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in SPECIALS.iter().map(|s| s.to_string()).chain(words) {
            v.push(w);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words.into_iter().skip(SPECIALS.len()).collect()
    }
}

impl Vocab {
    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.words.len());
            self.words.push(w);
        }
    }

    /// Vocabulary of every real token text in the documents, sorted.
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut v = Vocab::default();
        v.extend_from_documents(docs);
        v
    }

    /// Appends unseen words (sorted) after the existing ids. Returns how many
    /// were added.
    pub fn extend_from_documents<'a>(&mut self, docs: impl IntoIterator<Item = &'a Document>) -> usize {
        let new: BTreeSet<&str> = docs
            .into_iter()
            .flat_map(|d| d.real_tokens().iter().map(|t| t.text.as_str()))
            .filter(|w| !self.index.contains_key(*w))
            .collect();
        let added = new.len();
        for w in new {
            self.push(w.to_string());
        }
        added
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Ids for a full token sequence; position 0 maps to the null id.
    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| if i == 0 { NULL_ID } else { self.id(&t.text) })
            .collect()
    }
}

/// Model-ready token sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Tokenized {
    /// Null token followed by at most `max_seq_len - 1` real tokens.
    pub tokens: Vec<Token>,
    pub ids: Vec<usize>,
    /// Words dropped by truncation.
    pub truncated: usize,
}

/// Maps words in reading order to tokens, prepending the null token and
/// truncating to `max_seq_len - 1` real tokens.
pub fn tokenize(raw_words: &[(String, BoundingBox)], vocab: &Vocab, max_seq_len: usize) -> Tokenized {
    let keep = raw_words.len().min(max_seq_len.saturating_sub(1));
    let truncated = raw_words.len() - keep;
    if truncated > 0 {
        log::warn!("truncated {truncated} words beyond max_seq_len {max_seq_len}");
    }
    let mut tokens = vec![Token::null()];
    tokens.extend(raw_words[..keep].iter().enumerate().map(|(i, (text, bbox))| Token {
        text: text.clone(),
        bbox: *bbox,
        line_id: i as u32,
    }));
    let ids = vocab.encode(&tokens);
    Tokenized { tokens, ids, truncated }
}
