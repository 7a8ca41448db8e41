//! Complete extractors: the encoder plus either the span head with its query
//! registry or the BIO tag head, with checkpointing.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{Document, Vocab};
use crate::encoder::{DropoutRng, Encoder, EncoderConfig, EncoderInput, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{entity_f1, DocEntities, Entity, EvalReport};
use crate::exec::Execution;
use crate::numerics::{decode_archive, encode_archive, Graph, ParamStore, Tensor, Var};
use crate::recursive::{chain_loss, decode_chain, DecodeLimits, LinkChain, DEFAULT_MAX_CHAIN_LEN};
use crate::seqlabel::{bio_decode, tag_forward, tag_loss, tag_mask, TagHeadParams, TagSet};
use crate::span_head::{HeadParams, QueryRegistry, ScorerKind, DEFAULT_MAX_SPAN_LEN, QUERY_PREFIX};

const CHECKPOINT_KIND: &str = "docspan-model";
const TOKEN_TABLE: &str = "encoder/token";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Span,
    SeqLabel,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "span" => Ok(ModelKind::Span),
            "seqlabel" => Ok(ModelKind::SeqLabel),
            _ => Err(Error::Config(format!("unknown model type `{s}` (expected span or seqlabel)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Span => "span",
            ModelKind::SeqLabel => "seqlabel",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub encoder: EncoderConfig,
    pub scorer: ScorerKind,
    pub max_span_len: usize,
    pub max_chain_len: usize,
    /// Strict BIO decoding for the tagger.
    pub strict_bio: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Span,
            encoder: EncoderConfig::default(),
            scorer: ScorerKind::Bilinear,
            max_span_len: DEFAULT_MAX_SPAN_LEN,
            max_chain_len: DEFAULT_MAX_CHAIN_LEN,
            strict_bio: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.max_chain_len == 0 {
            return Err(Error::Config("max_chain_len must be positive".into()));
        }
        Ok(())
    }

    fn limits(&self) -> DecodeLimits {
        DecodeLimits {
            max_span_len: self.max_span_len,
            max_chain_len: self.max_chain_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelHead {
    Span { head: HeadParams, registry: QueryRegistry },
    SeqLabel { tags: TagSet, head: TagHeadParams },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub head: ModelHead,
    /// Seed for parameters created after construction (new field queries).
    pub init_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    version: String,
    model: ModelConfig,
    vocab: Vocab,
    init_seed: u64,
    #[serde(default)]
    tag_fields: Vec<String>,
    #[serde(default)]
    query_fields: Vec<String>,
}

/// Per-field stream so a query's initial value does not depend on the order
/// fields were registered in.
fn field_rng(seed: u64, field_id: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in field_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

impl Model {
    /// Freshly initialized model. `fields` become the tag set (tagger) or the
    /// initial query registry (span model).
    pub fn new(mut config: ModelConfig, vocab: Vocab, fields: &[String], seed: u64) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::init(&mut store, &config.encoder, &mut rng)?;
        let c = config.encoder.hidden_size;
        let std = config.encoder.init_std;
        let head = match config.kind {
            ModelKind::Span => ModelHead::Span {
                head: HeadParams::init(&mut store, config.scorer, c, std, &mut rng)?,
                registry: QueryRegistry::new(true),
            },
            ModelKind::SeqLabel => {
                let tags = TagSet::new(fields.to_vec());
                let head = TagHeadParams::init(&mut store, c, &tags, std, &mut rng)?;
                ModelHead::SeqLabel { tags, head }
            }
        };
        let mut model = Model {
            config,
            vocab,
            store,
            encoder,
            head,
            init_seed: seed,
        };
        model.register_fields(fields)?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Makes sure every field has a query (span model) or a tag (tagger).
    /// New queries are only created while auto-registration is on.
    pub fn register_fields(&mut self, fields: &[String]) -> Result<()> {
        let c = self.config.encoder.hidden_size;
        let std = self.config.encoder.init_std;
        match &mut self.head {
            ModelHead::Span { registry, .. } => {
                for f in fields {
                    let mut rng = field_rng(self.init_seed, f);
                    registry.get_or_register(f, &mut self.store, c, std, &mut rng)?;
                }
            }
            ModelHead::SeqLabel { tags, .. } => {
                if let Some(f) = fields.iter().find(|f| tags.field_index(f).is_none()) {
                    return Err(Error::UnknownField(f.clone()));
                }
            }
        }
        Ok(())
    }

    /// Allows or forbids creating queries for unseen fields.
    pub fn set_auto_register(&mut self, on: bool) {
        if let ModelHead::Span { registry, .. } = &mut self.head {
            registry.set_auto_register(on);
        }
    }

    /// Fields the model can extract.
    pub fn fields(&self) -> Vec<String> {
        match &self.head {
            ModelHead::Span { registry, .. } => registry.fields().map(String::from).collect(),
            ModelHead::SeqLabel { tags, .. } => tags.fields().to_vec(),
        }
    }

    pub fn encoder(&self) -> Encoder<'_> {
        Encoder::new(&self.config.encoder, &self.encoder)
    }

    fn input(&self, doc: &Document) -> Result<EncoderInput> {
        if doc.seq_len() > self.config.encoder.max_seq_len {
            return Err(Error::Domain(format!(
                "{} has {} positions; truncate to max_seq_len {} first",
                doc.doc_id,
                doc.seq_len(),
                self.config.encoder.max_seq_len
            )));
        }
        EncoderInput::from_document(doc, &self.vocab, None)
    }

    /// Training loss of one document on graph `g`. The span model averages
    /// the chain loss over `fields` (absent fields train the null span);
    /// the tagger uses its own tag set and ignores `fields`.
    pub fn loss(&self, g: &mut Graph<'_>, doc: &Document, fields: &[String], rng: DropoutRng<'_>) -> Result<Var> {
        let input = self.input(doc)?;
        let hidden = self.encoder().forward(g, &input, rng)?;
        match &self.head {
            ModelHead::Span { head, registry } => {
                if fields.is_empty() {
                    return Err(Error::Contract("span loss needs at least one field".into()));
                }
                let mut parts = Vec::with_capacity(fields.len());
                for f in fields {
                    let q = g.param(registry.lookup(f)?);
                    parts.push(chain_loss(g, hidden, q, doc.gold_spans(f), head, &input.mask)?);
                }
                let total = g.add_all(&parts)?;
                Ok(g.scale(total, 1.0 / parts.len() as f64))
            }
            ModelHead::SeqLabel { tags, head } => {
                let gold = tags.encode(doc)?;
                let logits = tag_forward(g, hidden, head)?;
                tag_loss(g, logits, &gold, &tag_mask(&input.mask))
            }
        }
    }

    pub fn hidden_states(&self, doc: &Document) -> Result<Tensor> {
        self.encoder().hidden_states(&self.store, &self.input(doc)?)
    }

    /// Decoded chains per field (span model only).
    pub fn predict_chains(&self, doc: &Document, fields: &[String]) -> Result<Vec<(String, LinkChain)>> {
        let ModelHead::Span { head, registry } = &self.head else {
            return Err(Error::Contract("chains are only produced by the span model".into()));
        };
        let ids = fields
            .iter()
            .map(|f| registry.lookup(f))
            .collect::<Result<Vec<_>>>()?;
        let input = self.input(doc)?;
        let hidden = self.encoder().hidden_states(&self.store, &input)?;
        fields
            .iter()
            .zip(ids)
            .map(|(f, id)| {
                let chain = decode_chain(
                    &self.store,
                    self.store.get(id).data(),
                    &hidden,
                    head,
                    &input.mask,
                    self.config.limits(),
                )?;
                Ok((f.clone(), chain))
            })
            .collect()
    }

    /// Predicted entities of the requested fields.
    pub fn predict(&self, doc: &Document, fields: &[String]) -> Result<DocEntities> {
        let entities = match &self.head {
            ModelHead::Span { .. } => self
                .predict_chains(doc, fields)?
                .into_iter()
                .flat_map(|(f, chain)| chain.span_list().into_iter().map(move |s| Entity::new(f.clone(), s)))
                .collect(),
            ModelHead::SeqLabel { tags, head } => {
                if let Some(f) = fields.iter().find(|f| tags.field_index(f).is_none()) {
                    return Err(Error::UnknownField(f.clone()));
                }
                let input = self.input(doc)?;
                let mut g = Graph::new(&self.store);
                let h = self.encoder().forward(&mut g, &input, None)?;
                let logits = tag_forward(&mut g, h, head)?;
                let logits = g.value(logits);
                let best: Vec<usize> = (1..input.len())
                    .map(|i| {
                        // first maximum, like Tensor::argmax
                        let row = logits.row(i);
                        (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b })
                    })
                    .collect();
                bio_decode(&best, tags, self.config.strict_bio)
                    .into_iter()
                    .filter(|e| fields.contains(&e.field_id))
                    .collect()
            }
        };
        Ok(DocEntities {
            doc_id: doc.doc_id.clone(),
            entities,
        })
    }

    /// Predicts every document (in parallel when allowed) and scores the
    /// result against the gold annotations of `fields`.
    pub fn evaluate(&self, docs: &[Document], fields: &[String], exec: Execution) -> Result<EvalReport> {
        let preds = exec
            .map(docs, |d| self.predict(d, fields))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<DocEntities> = docs.iter().map(DocEntities::gold).collect();
        entity_f1(&preds, &gold, Some(fields))
    }

    fn meta(&self) -> CheckpointMeta {
        let (tag_fields, query_fields) = match &self.head {
            ModelHead::Span { registry, .. } => (Vec::new(), registry.fields().map(String::from).collect()),
            ModelHead::SeqLabel { tags, .. } => (tags.fields().to_vec(), Vec::new()),
        };
        CheckpointMeta {
            kind: CHECKPOINT_KIND.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: self.config.clone(),
            vocab: self.vocab.clone(),
            init_seed: self.init_seed,
            tag_fields,
            query_fields,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(self.meta()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        encode_archive(&self.store, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, manifest) = decode_archive(bytes)?;
        let meta: CheckpointMeta =
            serde_json::from_value(manifest.meta).map_err(|e| Error::Checkpoint(format!("bad model metadata: {e}")))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("not a model checkpoint (kind `{}`)", meta.kind)));
        }
        let config = meta.model;
        if config.encoder.vocab_size != meta.vocab.len() {
            return Err(Error::Checkpoint("vocabulary does not match the token table".into()));
        }
        let encoder = EncoderParams::bind(&store, &config.encoder)?;
        let c = config.encoder.hidden_size;
        let head = match config.kind {
            ModelKind::Span => {
                let registry = QueryRegistry::from_store(&store);
                let found: Vec<&str> = registry.fields().collect();
                if found != meta.query_fields.iter().map(String::as_str).collect::<Vec<_>>() {
                    return Err(Error::Checkpoint("query manifest does not match stored queries".into()));
                }
                ModelHead::Span {
                    head: HeadParams::bind(&store, config.scorer, c)?,
                    registry,
                }
            }
            ModelKind::SeqLabel => {
                let tags = TagSet::new(meta.tag_fields);
                let head = TagHeadParams::bind(&store, c, &tags)?;
                ModelHead::SeqLabel { tags, head }
            }
        };
        Ok(Model {
            config,
            vocab: meta.vocab,
            store,
            encoder,
            head,
            init_seed: meta.init_seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Error::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// New model of `config.kind` whose shared weights start from `source`.
    ///
    /// The vocabulary is `source`'s extended with the words of `docs`
    /// (existing ids keep their embedding rows). Every parameter with the
    /// same name and shape is copied, and every source query is carried
    /// over so earlier fields stay available.
    pub fn init_from(
        source: &Model,
        config: ModelConfig,
        docs: &[Document],
        fields: &[String],
        seed: u64,
    ) -> Result<Self> {
        let (src, dst) = (&source.config.encoder, &config.encoder);
        if src.hidden_size != dst.hidden_size || src.num_layers != dst.num_layers || src.num_heads != dst.num_heads {
            return Err(Error::Config(
                "encoder shape differs from the initialization checkpoint".into(),
            ));
        }
        let mut vocab = source.vocab.clone();
        let added = vocab.extend_from_documents(docs);
        log::info!("init-from: {added} new vocabulary entries");
        let initial: &[String] = match config.kind {
            ModelKind::Span => &[],
            ModelKind::SeqLabel => fields,
        };
        let mut model = Model::new(config, vocab, initial, seed)?;
        let mut copied = 0;
        for (_, name, value) in source.store.iter() {
            if name.starts_with(QUERY_PREFIX) {
                continue;
            }
            let Some(id) = model.store.id(name) else { continue };
            let target = model.store.get(id);
            if target.shape() == value.shape() {
                model.store.set(id, value.clone())?;
                copied += 1;
            } else if name == TOKEN_TABLE || name == "encoder/position" {
                // copy the overlapping leading rows
                let mut t = target.clone();
                let n = value.len().min(t.len());
                t.data_mut()[..n].copy_from_slice(&value.data()[..n]);
                model.store.set(id, t)?;
                copied += 1;
            }
        }
        if let (ModelHead::Span { registry: dst, .. }, ModelHead::Span { registry: src, .. }) =
            (&mut model.head, &source.head)
        {
            let (c, std) = (model.config.encoder.hidden_size, model.config.encoder.init_std);
            for f in src.fields() {
                let value = source.store.get(src.lookup(f)?).clone();
                let mut rng = field_rng(seed, f);
                let id = dst.get_or_register(f, &mut model.store, c, std, &mut rng)?;
                model.store.set(id, value)?;
            }
        }
        log::info!("init-from: copied {copied} tensors");
        model.register_fields(fields)?;
        Ok(model)
    }
}
