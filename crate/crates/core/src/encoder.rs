//! Layout-aware transformer encoder.
//!
//! Input rows are the sum of a token embedding, a 1D position embedding and
//! four coordinate embeddings (x0, y0, x1, y1 on the 0–1000 grid). A stack of
//! pre-norm self-attention blocks with GELU feed-forward layers of width 4c
//! turns them into one hidden vector per position.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{BoundingBox, Document, Vocab, GRID_MAX, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Number of distinct values per coordinate embedding table.
pub const COORDINATE_VOCAB: usize = GRID_MAX as usize + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Longest input sequence, null token included.
    pub max_seq_len: usize,
    /// Set from the vocabulary when a model is built.
    pub vocab_size: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            max_seq_len: crate::doc_model::DEFAULT_MAX_SEQ_LEN,
            vocab_size: 0,
            dropout: 0.1,
            init_std: 0.02,
            layer_norm_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_heads == 0 {
            return Err(Error::Config("hidden_size and num_heads must be positive".into()));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    /// No key bias: it would add the same `q·b` to a whole row of scores,
    /// which the softmax cancels.
    pub wk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Handles to every encoder tensor inside a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub token: ParamId,
    pub position: ParamId,
    pub x0: ParamId,
    pub y0: ParamId,
    pub x1: ParamId,
    pub y1: ParamId,
    pub layers: Vec<LayerParams>,
    /// Final layer norm; absent for a zero-layer stack.
    pub final_ln: Option<(ParamId, ParamId)>,
}

const PREFIX: &str = "encoder";

fn layer_names(l: usize) -> [(String, &'static str); 15] {
    let n = |s: &str| format!("{PREFIX}/layer{l}/{s}");
    [
        (n("ln1_gain"), "ones"),
        (n("ln1_bias"), "zeros"),
        (n("wq"), "cc"),
        (n("bq"), "zeros"),
        (n("wk"), "cc"),
        (n("wv"), "cc"),
        (n("bv"), "zeros"),
        (n("wo"), "cc"),
        (n("bo"), "zeros"),
        (n("ln2_gain"), "ones"),
        (n("ln2_bias"), "zeros"),
        (n("w1"), "c4c"),
        (n("b1"), "zeros4"),
        (n("w2"), "4cc"),
        (n("b2"), "zeros"),
    ]
}

impl EncoderParams {
    /// Adds freshly initialized encoder tensors to `store`: normal(0, std)
    /// for embeddings and projections, unit gains and zero biases.
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.hidden_size;
        let std = config.init_std;
        store.add_normal(format!("{PREFIX}/token"), &[config.vocab_size.max(1), c], std, rng)?;
        store.add_normal(format!("{PREFIX}/position"), &[config.max_seq_len, c], std, rng)?;
        for name in ["x0", "y0", "x1", "y1"] {
            store.add_normal(format!("{PREFIX}/{name}"), &[COORDINATE_VOCAB, c], std, rng)?;
        }
        for l in 0..config.num_layers {
            for (name, kind) in layer_names(l) {
                match kind {
                    "ones" => store.add(name, Tensor::full(&[c], 1.0))?,
                    "zeros" => store.add(name, Tensor::zeros(&[c]))?,
                    "zeros4" => store.add(name, Tensor::zeros(&[4 * c]))?,
                    "cc" => store.add_normal(name, &[c, c], std, rng)?,
                    "c4c" => store.add_normal(name, &[c, 4 * c], std, rng)?,
                    "4cc" => store.add_normal(name, &[4 * c, c], std, rng)?,
                    _ => unreachable!(),
                };
            }
        }
        if config.num_layers > 0 {
            store.add(format!("{PREFIX}/final_ln_gain"), Tensor::full(&[c], 1.0))?;
            store.add(format!("{PREFIX}/final_ln_bias"), Tensor::zeros(&[c]))?;
        }
        Self::bind(store, config)
    }

    /// Looks up encoder tensors by name and checks their shapes.
    pub fn bind(store: &ParamStore, config: &EncoderConfig) -> Result<Self> {
        let c = config.hidden_size;
        let get = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Shape {
                    op: "bind_encoder",
                    left: store.get(id).shape().to_vec(),
                    right: shape.to_vec(),
                });
            }
            Ok(id)
        };
        let coord = |n: &str| get(&format!("{PREFIX}/{n}"), &[COORDINATE_VOCAB, c]);
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let names = layer_names(l);
            let shape = |kind: &str| match kind {
                "ones" | "zeros" => vec![c],
                "zeros4" => vec![4 * c],
                "cc" => vec![c, c],
                "c4c" => vec![c, 4 * c],
                _ => vec![4 * c, c],
            };
            let ids = names
                .iter()
                .map(|(n, k)| get(n, &shape(k)))
                .collect::<Result<Vec<_>>>()?;
            layers.push(LayerParams {
                ln1_gain: ids[0],
                ln1_bias: ids[1],
                wq: ids[2],
                bq: ids[3],
                wk: ids[4],
                wv: ids[5],
                bv: ids[6],
                wo: ids[7],
                bo: ids[8],
                ln2_gain: ids[9],
                ln2_bias: ids[10],
                w1: ids[11],
                b1: ids[12],
                w2: ids[13],
                b2: ids[14],
            });
        }
        let final_ln = if config.num_layers > 0 {
            Some((
                get(&format!("{PREFIX}/final_ln_gain"), &[c])?,
                get(&format!("{PREFIX}/final_ln_bias"), &[c])?,
            ))
        } else {
            None
        };
        Ok(EncoderParams {
            token: get(&format!("{PREFIX}/token"), &[config.vocab_size.max(1), c])?,
            position: get(&format!("{PREFIX}/position"), &[config.max_seq_len, c])?,
            x0: coord("x0")?,
            y0: coord("y0")?,
            x1: coord("x1")?,
            y1: coord("y1")?,
            layers,
            final_ln,
        })
    }
}

/// Token ids, boxes and attention mask for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub boxes: Vec<BoundingBox>,
    /// `true` for real positions (null token included), `false` for padding.
    pub mask: Vec<bool>,
}

impl EncoderInput {
    /// Encodes a document, optionally right-padding to `pad_to` positions
    /// with the pad token and an all-zero box.
    pub fn from_document(doc: &Document, vocab: &Vocab, pad_to: Option<usize>) -> Result<Self> {
        let mut ids = vocab.encode(doc.tokens());
        let mut boxes: Vec<BoundingBox> = doc.tokens().iter().map(|t| t.bbox).collect();
        let mut mask = vec![true; ids.len()];
        if let Some(n) = pad_to {
            if n < ids.len() {
                return Err(Error::Domain(format!(
                    "{} has {} positions, longer than padding target {n}",
                    doc.doc_id,
                    ids.len()
                )));
            }
            ids.resize(n, PAD_ID);
            boxes.resize(n, BoundingBox::NULL);
            mask.resize(n, false);
        }
        Ok(EncoderInput { ids, boxes, mask })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Dropout source; `None` disables dropout.
pub type DropoutRng<'r> = Option<&'r mut dyn rand::RngCore>;

/// Encoder bound to its configuration and parameter handles.
#[derive(Clone, Copy)]
pub struct Encoder<'a> {
    pub config: &'a EncoderConfig,
    pub params: &'a EncoderParams,
}

impl<'a> Encoder<'a> {
    pub fn new(config: &'a EncoderConfig, params: &'a EncoderParams) -> Self {
        Encoder { config, params }
    }

    /// Sum of token, 1D position and four coordinate embeddings, `[L×c]`.
    pub fn embed(&self, g: &mut Graph<'_>, input: &EncoderInput) -> Result<Var> {
        let len = input.len();
        if len == 0 || len > self.config.max_seq_len {
            return Err(Error::Domain(format!(
                "sequence length {len} outside 1..={}",
                self.config.max_seq_len
            )));
        }
        let vocab = g.store().get(self.params.token).dims2().0;
        if let Some(&bad) = input.ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Index { index: bad, len: vocab });
        }
        if let Some(b) = input.boxes.iter().find(|b| b.coords().iter().any(|&v| v > GRID_MAX)) {
            return Err(Error::Domain(format!("coordinate outside grid in {:?}", b.coords())));
        }
        let positions: Vec<usize> = (0..len).collect();
        let coord = |f: fn(&BoundingBox) -> u16| input.boxes.iter().map(|b| f(b) as usize).collect::<Vec<_>>();

        let tok = g.param(self.params.token);
        let pos = g.param(self.params.position);
        let tables = [
            (g.param(self.params.x0), coord(|b| b.x0)),
            (g.param(self.params.y0), coord(|b| b.y0)),
            (g.param(self.params.x1), coord(|b| b.x1)),
            (g.param(self.params.y1), coord(|b| b.y1)),
        ];
        let mut parts = vec![g.gather_rows(tok, &input.ids)?, g.gather_rows(pos, &positions)?];
        for (table, idx) in tables {
            parts.push(g.gather_rows(table, &idx)?);
        }
        g.add_all(&parts)
    }

    fn dropout(&self, g: &mut Graph<'_>, x: Var, rng: &mut DropoutRng<'_>) -> Result<Var> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let shape = g.shape(x).to_vec();
                let n = g.value(x).len();
                let mask = (0..n)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                let m = g.input(Tensor::new(shape, mask)?);
                g.mul(x, m)
            }
            _ => Ok(x),
        }
    }

    /// Runs the transformer stack over `x0` with key mask `mask`.
    pub fn encode(&self, g: &mut Graph<'_>, x0: Var, mask: &[bool], mut rng: DropoutRng<'_>) -> Result<Var> {
        let (len, c) = g.value(x0).dims2();
        if mask.len() != len {
            return Err(Error::Shape {
                op: "encode",
                left: vec![len, c],
                right: vec![mask.len()],
            });
        }
        let eps = self.config.layer_norm_eps;
        let heads = self.config.num_heads;
        let d = c / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut x = self.dropout(g, x0, &mut rng)?;

        for (l, lp) in self.params.layers.iter().enumerate() {
            let (g1, b1) = (g.param(lp.ln1_gain), g.param(lp.ln1_bias));
            let h = g.layer_norm(x, g1, b1, eps)?;
            let proj = |g: &mut Graph<'_>, w: ParamId, b: Option<ParamId>| -> Result<Var> {
                let w = g.param(w);
                let y = g.matmul(h, w)?;
                match b {
                    Some(b) => {
                        let b = g.param(b);
                        g.add_row(y, b)
                    }
                    None => Ok(y),
                }
            };
            let q = proj(g, lp.wq, Some(lp.bq))?;
            let k = proj(g, lp.wk, None)?;
            let v = proj(g, lp.wv, Some(lp.bv))?;
            let mut outs = Vec::with_capacity(heads);
            for head in 0..heads {
                let (qh, kh, vh) = if heads == 1 {
                    (q, k, v)
                } else {
                    (
                        g.slice_cols(q, head * d, d)?,
                        g.slice_cols(k, head * d, d)?,
                        g.slice_cols(v, head * d, d)?,
                    )
                };
                let scores = g.matmul_nt(qh, kh)?;
                let scores = g.scale(scores, scale);
                let scores = g.mask_cols(scores, mask)?;
                let probs = g.softmax_rows(scores);
                outs.push(g.matmul(probs, vh)?);
            }
            let attn = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
            let (wo, bo) = (g.param(lp.wo), g.param(lp.bo));
            let attn = g.matmul(attn, wo)?;
            let attn = g.add_row(attn, bo)?;
            let attn = self.dropout(g, attn, &mut rng)?;
            x = g.add(x, attn)?;

            let (g2, b2) = (g.param(lp.ln2_gain), g.param(lp.ln2_bias));
            let h = g.layer_norm(x, g2, b2, eps)?;
            let (w1, bias1) = (g.param(lp.w1), g.param(lp.b1));
            let f = g.matmul(h, w1)?;
            let f = g.add_row(f, bias1)?;
            let f = g.gelu(f);
            let (w2, bias2) = (g.param(lp.w2), g.param(lp.b2));
            let f = g.matmul(f, w2)?;
            let f = g.add_row(f, bias2)?;
            let f = self.dropout(g, f, &mut rng)?;
            x = g.add(x, f)?;

            if !g.value(x).is_finite() {
                return Err(Error::Numeric(format!("non-finite activation in encoder layer {l}")));
            }
        }
        if let Some((gain, bias)) = self.params.final_ln {
            let (gain, bias) = (g.param(gain), g.param(bias));
            x = g.layer_norm(x, gain, bias, eps)?;
        }
        Ok(x)
    }

    /// Embedding followed by the transformer stack.
    pub fn forward(&self, g: &mut Graph<'_>, input: &EncoderInput, rng: DropoutRng<'_>) -> Result<Var> {
        let x0 = self.embed(g, input)?;
        self.encode(g, x0, &input.mask, rng)
    }

    /// Inference-mode hidden states as a plain tensor.
    pub fn hidden_states(&self, store: &ParamStore, input: &EncoderInput) -> Result<Tensor> {
        let mut g = Graph::new(store);
        let h = self.forward(&mut g, input, None)?;
        Ok(g.value(h).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::Token;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(layers: usize) -> EncoderConfig {
        EncoderConfig {
            hidden_size: 8,
            num_layers: layers,
            num_heads: 2,
            max_seq_len: 8,
            vocab_size: 6,
            dropout: 0.0,
            init_std: 0.5,
            layer_norm_eps: 1e-5,
        }
    }

    fn doc() -> (Document, Vocab) {
        let t = |s: &str, x: i64| Token {
            text: s.into(),
            bbox: BoundingBox::new(x, 10, x + 20, 20).unwrap(),
            line_id: 0,
        };
        let d = Document::new("d", 100, 100, vec![t("a", 0), t("b", 30), t("a", 60)], vec![]).unwrap();
        let v = Vocab::from_documents([&d]);
        (d, v)
    }

    #[test]
    fn zero_layers_is_identity() {
        let cfg = config(0);
        let mut store = ParamStore::new();
        let params = EncoderParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (d, v) = doc();
        let input = EncoderInput::from_document(&d, &v, None).unwrap();
        let enc = Encoder::new(&cfg, &params);
        let mut g = Graph::new(&store);
        let x0 = enc.embed(&mut g, &input).unwrap();
        let h = enc.encode(&mut g, x0, &input.mask, None).unwrap();
        assert_eq!(g.value(x0), g.value(h));
    }

    #[test]
    fn box_breaks_token_ties() {
        let cfg = config(0);
        let mut store = ParamStore::new();
        let params = EncoderParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (d, v) = doc();
        let input = EncoderInput::from_document(&d, &v, None).unwrap();
        let h = Encoder::new(&cfg, &params).hidden_states(&store, &input).unwrap();
        assert_eq!(input.ids[1], input.ids[3]);
        assert_ne!(h.row(1), h.row(3));
    }

    #[test]
    fn all_zero_tables_embed_to_zero() {
        let cfg = EncoderConfig {
            init_std: 1e-300,
            ..config(0)
        };
        let mut store = ParamStore::new();
        let params = EncoderParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        let (d, v) = doc();
        let input = EncoderInput::from_document(&d, &v, Some(4)).unwrap();
        let h = Encoder::new(&cfg, &params).hidden_states(&store, &input).unwrap();
        assert!(h.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn padding_never_reaches_real_rows() {
        let cfg = config(2);
        let mut store = ParamStore::new();
        let params = EncoderParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (d, v) = doc();
        let input = EncoderInput::from_document(&d, &v, Some(8)).unwrap();
        assert_eq!(input.mask, vec![true, true, true, true, false, false, false, false]);
        let enc = Encoder::new(&cfg, &params);
        let base = enc.hidden_states(&store, &input).unwrap();
        assert_eq!(base.shape(), &[8, 8]);

        let mut perturbed = input.clone();
        perturbed.ids[5] = 4;
        perturbed.boxes[6] = BoundingBox::new(100, 200, 300, 400).unwrap();
        let other = enc.hidden_states(&store, &perturbed).unwrap();
        for i in 0..4 {
            let a: Vec<u64> = base.row(i).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = other.row(i).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "row {i}");
        }
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = EncoderConfig {
            num_heads: 3,
            ..config(1)
        };
        assert!(cfg.validate().is_err());
    }
}
