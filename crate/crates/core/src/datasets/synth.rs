//! Synthetic form-like documents.
//!
//! A page is a grid of `grid_cols × grid_rows` cells. Every field owns a
//! fixed nonsense key word. Single-valued fields appear as key/value rows;
//! with the `table_columns` layout, multi-valued fields form a table whose
//! header row holds the keys and whose columns hold the values, so all values
//! of one field share their left edge. Distractor lines mix filler words with
//! numbers. Tokens are emitted in reading order and every value line is one
//! gold span.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::doc_model::{normalize_box, split_line_to_words, Document, EntityAnnotation, FieldSchema, PixelBox, Span, Token};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutStyle {
    /// Every value on its own row; further values of a multi-valued field
    /// continue below the first, aligned with it.
    #[default]
    KeyValueRows,
    /// Multi-valued fields share one table, one column per field.
    TableColumns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Amount,
    Number,
    Word,
    Date,
}

/// Inclusive range of values per document when the field is present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multiplicity {
    pub min: usize,
    pub max: usize,
}

impl Multiplicity {
    pub const ONE: Multiplicity = Multiplicity { min: 1, max: 1 };

    pub fn fixed(n: usize) -> Self {
        Multiplicity { min: n, max: n }
    }

    pub fn is_multi(&self) -> bool {
        self.max > 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthField {
    /// Local name; the field id is `<dataset_id>/<name>`.
    pub name: String,
    #[serde(default = "one")]
    pub multiplicity: Multiplicity,
    /// Probability the field appears in a document.
    #[serde(default = "always")]
    pub presence: f64,
    /// Inclusive token-count range of one value.
    #[serde(default = "len_one_two")]
    pub value_len: (usize, usize),
    pub kind: ValueKind,
    /// Cap on the number of documents per split that carry this field.
    #[serde(default)]
    pub max_docs: Option<usize>,
}

fn one() -> Multiplicity {
    Multiplicity::ONE
}
fn always() -> f64 {
    1.0
}
fn len_one_two() -> (usize, usize) {
    (1, 2)
}

impl SynthField {
    pub fn new(name: &str, kind: ValueKind) -> Self {
        SynthField {
            name: name.into(),
            multiplicity: Multiplicity::ONE,
            presence: 1.0,
            value_len: (1, 2),
            kind,
            max_docs: None,
        }
    }

    pub fn multiplicity(mut self, min: usize, max: usize) -> Self {
        self.multiplicity = Multiplicity { min, max };
        self
    }

    pub fn presence(mut self, p: f64) -> Self {
        self.presence = p;
        self
    }

    pub fn value_len(mut self, min: usize, max: usize) -> Self {
        self.value_len = (min, max);
        self
    }

    pub fn max_docs(mut self, n: usize) -> Self {
        self.max_docs = Some(n);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    #[serde(default)]
    pub train: usize,
    #[serde(default)]
    pub dev: usize,
    #[serde(default)]
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dataset_id: String,
    pub seed: u64,
    pub splits: SplitSizes,
    #[serde(default)]
    pub layout: LayoutStyle,
    #[serde(default = "default_page_width")]
    pub page_width: u32,
    #[serde(default = "default_page_height")]
    pub page_height: u32,
    #[serde(default = "default_grid_cols")]
    pub grid_cols: usize,
    #[serde(default = "default_grid_rows")]
    pub grid_rows: usize,
    /// Inclusive range of distractor lines per document.
    #[serde(default = "default_noise")]
    pub noise_lines: (usize, usize),
    pub fields: Vec<SynthField>,
}

fn default_page_width() -> u32 {
    800
}
fn default_page_height() -> u32 {
    1000
}
fn default_grid_cols() -> usize {
    12
}
fn default_grid_rows() -> usize {
    40
}
fn default_noise() -> (usize, usize) {
    (1, 3)
}

impl SynthConfig {
    pub fn new(dataset_id: &str, seed: u64, splits: SplitSizes, fields: Vec<SynthField>) -> Self {
        SynthConfig {
            dataset_id: dataset_id.into(),
            seed,
            splits,
            layout: LayoutStyle::default(),
            page_width: default_page_width(),
            page_height: default_page_height(),
            grid_cols: default_grid_cols(),
            grid_rows: default_grid_rows(),
            noise_lines: default_noise(),
            fields,
        }
    }

    /// Receipt-like corpus: single-valued totals plus a table of line items.
    pub fn receipts(seed: u64, splits: SplitSizes) -> Self {
        let mut c = SynthConfig::new(
            "receipt",
            seed,
            splits,
            vec![
                SynthField::new("store", ValueKind::Word).value_len(1, 2),
                SynthField::new("date", ValueKind::Date).value_len(1, 1),
                SynthField::new("item_name", ValueKind::Word).multiplicity(1, 4).value_len(1, 2),
                SynthField::new("item_qty", ValueKind::Number).multiplicity(1, 4).value_len(1, 1),
                SynthField::new("item_price", ValueKind::Amount).multiplicity(1, 4).value_len(1, 1),
                SynthField::new("tax", ValueKind::Amount).presence(0.6).value_len(1, 1),
                SynthField::new("total", ValueKind::Amount).value_len(1, 1),
            ],
        );
        c.layout = LayoutStyle::TableColumns;
        c
    }

    /// Invoice-like corpus with a disjoint field namespace, used as a
    /// pre-training source.
    pub fn invoices(seed: u64, splits: SplitSizes) -> Self {
        let mut c = SynthConfig::new(
            "invoice",
            seed,
            splits,
            vec![
                SynthField::new("vendor", ValueKind::Word).value_len(1, 2),
                SynthField::new("issue_date", ValueKind::Date).value_len(1, 1),
                SynthField::new("due_date", ValueKind::Date).presence(0.7).value_len(1, 1),
                SynthField::new("line_desc", ValueKind::Word).multiplicity(1, 5).value_len(1, 3),
                SynthField::new("line_amount", ValueKind::Amount).multiplicity(1, 5).value_len(1, 1),
                SynthField::new("invoice_no", ValueKind::Number).value_len(1, 2),
                SynthField::new("amount_due", ValueKind::Amount).value_len(1, 1),
            ],
        );
        c.layout = LayoutStyle::TableColumns;
        c
    }

    /// Frequent fields plus three rare ones with short values; the rare
    /// fields appear in at most five documents per split.
    pub fn rare_fields(seed: u64, splits: SplitSizes) -> Self {
        SynthConfig::new(
            "rare",
            seed,
            splits,
            vec![
                SynthField::new("name", ValueKind::Word).value_len(1, 2),
                SynthField::new("amount", ValueKind::Amount).value_len(1, 1),
                SynthField::new("number", ValueKind::Number).value_len(1, 2),
                SynthField::new("item", ValueKind::Word).multiplicity(1, 3).value_len(1, 2),
                SynthField::new("ref", ValueKind::Number).presence(0.3).max_docs(5).value_len(1, 1),
                SynthField::new("memo", ValueKind::Word).presence(0.3).max_docs(5).value_len(1, 2),
                SynthField::new("fee", ValueKind::Amount).presence(0.3).max_docs(5).value_len(1, 1),
            ],
        )
    }

    pub fn field_id(&self, field: &SynthField) -> String {
        format!("{}/{}", self.dataset_id, field.name)
    }

    pub fn schema(&self) -> Result<FieldSchema> {
        FieldSchema::new(self.dataset_id.clone(), self.fields.iter().map(|f| self.field_id(f)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dataset_id.is_empty() || self.dataset_id.contains('/') {
            return bad(format!("invalid dataset_id `{}`", self.dataset_id));
        }
        if self.page_width == 0 || self.page_height == 0 {
            return bad("page size must be positive".into());
        }
        if self.grid_cols < 2 || self.grid_rows < 1 {
            return bad("grid needs at least 2 columns and 1 row".into());
        }
        if self.noise_lines.0 > self.noise_lines.1 {
            return bad("noise_lines range is reversed".into());
        }
        if self.fields.is_empty() {
            return bad("no fields".into());
        }
        for f in &self.fields {
            if f.name.is_empty() || f.name.contains('/') {
                return bad(format!("invalid field name `{}`", f.name));
            }
            if !(0.0..=1.0).contains(&f.presence) {
                return bad(format!("{}: presence {} outside [0, 1]", f.name, f.presence));
            }
            let m = f.multiplicity;
            if m.min == 0 || m.min > m.max {
                return bad(format!("{}: multiplicity must satisfy 1 <= min <= max", f.name));
            }
            if f.value_len.0 == 0 || f.value_len.0 > f.value_len.1 {
                return bad(format!("{}: value_len must satisfy 1 <= min <= max", f.name));
            }
        }
        self.schema().map(|_| ())
    }
}

const KEY_SYLLABLES: [&str; 16] = [
    "ka", "ro", "mi", "te", "su", "no", "ha", "ri", "po", "ze", "lu", "va", "di", "ko", "fe", "gu",
];

const VALUE_WORDS: [&str; 40] = [
    "amber", "birch", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper", "kestrel",
    "lumen", "maple", "nectar", "onyx", "pylon", "quartz", "raven", "sable", "tundra", "umber", "vesper", "willow",
    "xenon", "yarrow", "zephyr", "acorn", "bramble", "cinder", "dune", "elm", "flint", "grove", "heron", "iris",
    "jade", "kelp", "lark", "moss", "nova",
];

const FILLER_WORDS: [&str; 16] = [
    "thank", "you", "visit", "again", "page", "of", "ref", "tel", "no", "copy", "slip", "www", "shop", "open",
    "daily", "card",
];

/// Deterministic key word for a field: two or three syllables picked by an
/// FNV-1a hash of the name, followed by a colon.
fn key_word(name: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let n = 2 + (h % 2) as usize;
    let mut w = String::new();
    for i in 0..n {
        w.push_str(KEY_SYLLABLES[((h >> (8 + 4 * i)) & 15) as usize]);
    }
    w.push(':');
    w
}

fn key_words(fields: &[SynthField]) -> Vec<String> {
    let mut keys: Vec<String> = Vec::with_capacity(fields.len());
    for f in fields {
        let base = key_word(&f.name);
        let mut k = base.clone();
        let mut i = 2;
        while keys.contains(&k) {
            k = format!("{}{i}:", base.trim_end_matches(':'));
            i += 1;
        }
        keys.push(k);
    }
    keys
}

/// Draws one token from the closed lexicon of `kind` (about 50 entries
/// each), so most values recur across documents.
fn value_token(kind: ValueKind, rng: &mut ChaCha8Rng) -> String {
    match kind {
        ValueKind::Amount => {
            let cents = ["00", "50"][rng.random_range(0..2)];
            format!("{}.{cents}", rng.random_range(1..=25))
        }
        ValueKind::Number => rng.random_range(1..=50).to_string(),
        ValueKind::Word => VALUE_WORDS[rng.random_range(0..VALUE_WORDS.len())].to_string(),
        ValueKind::Date => {
            let day = [1, 8, 15, 22][rng.random_range(0..4)];
            format!("{day:02}/{:02}", rng.random_range(1..=12))
        }
    }
}

fn value_words(field: &SynthField, rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(field.value_len.0..=field.value_len.1);
    (0..n).map(|_| value_token(field.kind, rng)).collect()
}

/// One line of text placed at a grid position.
struct Placed {
    row: usize,
    col: usize,
    words: Vec<String>,
    field: Option<usize>,
}

/// Cell width a line occupies: one cell per word.
fn cells(words: &[String]) -> usize {
    words.len()
}

struct Layout<'c> {
    config: &'c SynthConfig,
    row: usize,
    lines: Vec<Placed>,
}

impl Layout<'_> {
    fn take_rows(&mut self, n: usize) -> Result<usize> {
        let r = self.row;
        if r + n > self.config.grid_rows {
            return Err(Error::Generation(format!(
                "{}: layout needs more than {} grid rows",
                self.config.dataset_id, self.config.grid_rows
            )));
        }
        self.row += n;
        Ok(r)
    }

    fn place(&mut self, row: usize, col: usize, words: Vec<String>, field: Option<usize>) -> Result<()> {
        if col + cells(&words) > self.config.grid_cols {
            return Err(Error::Generation(format!(
                "{}: line of {} words at column {col} exceeds {} grid columns",
                self.config.dataset_id,
                words.len(),
                self.config.grid_cols
            )));
        }
        self.lines.push(Placed { row, col, words, field });
        Ok(())
    }
}

enum Block {
    KeyValue(usize),
    Table(Vec<usize>),
    Noise,
}

fn generate_doc(
    config: &SynthConfig,
    keys: &[String],
    present: &[bool],
    doc_id: String,
    rng: &mut ChaCha8Rng,
) -> Result<Document> {
    let table = config.layout == LayoutStyle::TableColumns;
    let mut blocks = Vec::new();
    let mut table_fields = Vec::new();
    for (i, f) in config.fields.iter().enumerate() {
        if !present[i] {
            continue;
        }
        if table && f.multiplicity.is_multi() {
            table_fields.push(i);
        } else {
            blocks.push(Block::KeyValue(i));
        }
    }
    if !table_fields.is_empty() {
        blocks.push(Block::Table(table_fields));
    }
    let noise = rng.random_range(config.noise_lines.0..=config.noise_lines.1);
    blocks.extend((0..noise).map(|_| Block::Noise));
    blocks.shuffle(rng);

    let mut layout = Layout {
        config,
        row: rng.random_range(0..2),
        lines: Vec::new(),
    };
    for block in blocks {
        match block {
            Block::KeyValue(i) => {
                let f = &config.fields[i];
                let count = rng.random_range(f.multiplicity.min..=f.multiplicity.max);
                let key_col = rng.random_range(0..2);
                let val_col = key_col + 1 + rng.random_range(0..2);
                let first = layout.take_rows(count)?;
                layout.place(first, key_col, vec![keys[i].clone()], None)?;
                for r in 0..count {
                    let words = value_words(f, rng);
                    layout.place(first + r, val_col, words, Some(i))?;
                }
            }
            Block::Table(fields) => {
                let counts: Vec<usize> = fields
                    .iter()
                    .map(|&i| {
                        let m = config.fields[i].multiplicity;
                        rng.random_range(m.min..=m.max)
                    })
                    .collect();
                let rows = counts.iter().copied().max().unwrap_or(0);
                let header = layout.take_rows(1 + rows)?;
                let mut col = 0;
                for (&i, &count) in fields.iter().zip(&counts) {
                    let f = &config.fields[i];
                    layout.place(header, col, vec![keys[i].clone()], None)?;
                    for r in 0..count {
                        let words = value_words(f, rng);
                        layout.place(header + 1 + r, col, words, Some(i))?;
                    }
                    col += f.value_len.1.max(1) + 1;
                }
            }
            Block::Noise => {
                let n = rng.random_range(1..=3usize.min(config.grid_cols));
                let words: Vec<String> = (0..n)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            value_token(ValueKind::Number, rng)
                        } else {
                            FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())].to_string()
                        }
                    })
                    .collect();
                let col = rng.random_range(0..=config.grid_cols - n);
                let row = layout.take_rows(1)?;
                layout.place(row, col, words, None)?;
            }
        }
        // occasional blank row between blocks
        if rng.random_bool(0.3) && layout.row < config.grid_rows {
            layout.row += 1;
        }
    }

    let mut lines = layout.lines;
    lines.sort_by_key(|l| (l.row, l.col));
    let (pw, ph) = (config.page_width as f64, config.page_height as f64);
    let cw = pw / config.grid_cols as f64;
    let rh = ph / config.grid_rows as f64;

    let mut tokens = Vec::new();
    let mut spans: Vec<Vec<Span>> = vec![Vec::new(); config.fields.len()];
    for (line_id, line) in lines.iter().enumerate() {
        let px = PixelBox {
            x0: line.col as f64 * cw + 0.05 * cw,
            y0: line.row as f64 * rh + 0.15 * rh,
            x1: (line.col + cells(&line.words)) as f64 * cw - 0.05 * cw,
            y1: (line.row + 1) as f64 * rh - 0.15 * rh,
        };
        let line_box = normalize_box(px, pw, ph)?;
        let boxes = split_line_to_words(line_box, &line.words)?;
        let first = tokens.len() + 1;
        for (w, b) in line.words.iter().zip(boxes) {
            tokens.push(Token {
                text: w.clone(),
                bbox: b,
                line_id: line_id as u32,
            });
        }
        if let Some(i) = line.field {
            spans[i].push(Span::new(first, tokens.len()));
        }
    }
    let annotations = config
        .fields
        .iter()
        .zip(spans)
        .filter(|(_, s)| !s.is_empty())
        .map(|(f, spans)| EntityAnnotation {
            field_id: config.field_id(f),
            spans,
        })
        .collect();
    Ok(Document::new(doc_id, config.page_width, config.page_height, tokens, annotations)?.with_chain_order())
}

fn split_seed(seed: u64, split: Split) -> u64 {
    let k: u64 = match split {
        Split::Train => 1,
        Split::Dev => 2,
        Split::Test => 3,
    };
    seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Generates one split. Identical configs give identical documents; splits
/// draw from independent streams and carry the split in their doc ids.
pub fn gen_synthetic_split(config: &SynthConfig, split: Split) -> Result<Dataset> {
    config.validate()?;
    let schema = config.schema()?;
    let keys = key_words(&config.fields);
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, split));
    let n = config.splits.get(split);
    let mut used = vec![0usize; config.fields.len()];
    let mut documents = Vec::with_capacity(n);
    for d in 0..n {
        let present: Vec<bool> = config
            .fields
            .iter()
            .zip(&mut used)
            .map(|(f, used)| {
                let draw = rng.random_bool(f.presence);
                let ok = draw && f.max_docs.is_none_or(|cap| *used < cap);
                *used += ok as usize;
                ok
            })
            .collect();
        let doc_id = format!("{}-{split}-{d:05}", config.dataset_id);
        documents.push(generate_doc(config, &keys, &present, doc_id, &mut rng)?);
    }
    Dataset::new(schema, documents, split)
}

/// Generates every split with a non-zero size, in train/dev/test order.
pub fn gen_synthetic(config: &SynthConfig) -> Result<Vec<Dataset>> {
    Split::ALL
        .into_iter()
        .filter(|&s| config.splits.get(s) > 0)
        .map(|s| gen_synthetic_split(config, s))
        .collect()
}
