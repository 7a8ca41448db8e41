//! Query registry and the query–context span scorer.
//!
//! A query vector `q` (a field's learned embedding, or the hidden state of a
//! previous answer's start token) is scored against every position of the
//! encoded document. The default scorer is bilinear, `qᵀ·W·hⁱ`, with
//! separate matrices for start and end; an additive form
//! `vᵀ·tanh(Wq·q + Wh·hⁱ)` is available as an alternative.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::Span;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub const QUERY_PREFIX: &str = "query/";
pub const DEFAULT_MAX_SPAN_LEN: usize = 30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Bilinear,
    Additive,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EndpointParams {
    Bilinear { w: ParamId },
    Additive { wq: ParamId, wh: ParamId, v: ParamId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub kind: ScorerKind,
    pub start: EndpointParams,
    pub end: EndpointParams,
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: ScorerKind,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        for endpoint in ["start", "end"] {
            let p = format!("span_head/{endpoint}");
            match kind {
                ScorerKind::Bilinear => {
                    store.add_normal(format!("{p}/w"), &[hidden, hidden], std, rng)?;
                }
                ScorerKind::Additive => {
                    store.add_normal(format!("{p}/wq"), &[hidden, hidden], std, rng)?;
                    store.add_normal(format!("{p}/wh"), &[hidden, hidden], std, rng)?;
                    store.add_normal(format!("{p}/v"), &[hidden, 1], std, rng)?;
                }
            }
        }
        Self::bind(store, kind, hidden)
    }

    pub fn bind(store: &ParamStore, kind: ScorerKind, hidden: usize) -> Result<Self> {
        let get = |name: String, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!("`{name}` has shape {:?}", store.get(id).shape())));
            }
            Ok(id)
        };
        let endpoint = |e: &str| -> Result<EndpointParams> {
            let p = format!("span_head/{e}");
            Ok(match kind {
                ScorerKind::Bilinear => EndpointParams::Bilinear {
                    w: get(format!("{p}/w"), &[hidden, hidden])?,
                },
                ScorerKind::Additive => EndpointParams::Additive {
                    wq: get(format!("{p}/wq"), &[hidden, hidden])?,
                    wh: get(format!("{p}/wh"), &[hidden, hidden])?,
                    v: get(format!("{p}/v"), &[hidden, 1])?,
                },
            })
        };
        Ok(HeadParams {
            kind,
            start: endpoint("start")?,
            end: endpoint("end")?,
        })
    }
}

/// Learned per-field query vectors, stored as `query/<field_id>` in the
/// parameter store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryRegistry {
    entries: BTreeMap<String, ParamId>,
    auto_register: bool,
}

impl QueryRegistry {
    pub fn new(auto_register: bool) -> Self {
        QueryRegistry {
            entries: BTreeMap::new(),
            auto_register,
        }
    }

    /// Rebuilds the registry from every `query/…` tensor in a store.
    pub fn from_store(store: &ParamStore) -> Self {
        let entries = store
            .iter()
            .filter_map(|(id, name, _)| name.strip_prefix(QUERY_PREFIX).map(|f| (f.to_string(), id)))
            .collect();
        QueryRegistry {
            entries,
            auto_register: false,
        }
    }

    pub fn set_auto_register(&mut self, on: bool) {
        self.auto_register = on;
    }

    pub fn auto_register(&self) -> bool {
        self.auto_register
    }

    pub fn lookup(&self, field_id: &str) -> Result<ParamId> {
        self.entries
            .get(field_id)
            .copied()
            .ok_or_else(|| Error::UnknownField(field_id.to_string()))
    }

    /// Returns the query for `field_id`, creating it when auto-registration
    /// is on.
    pub fn get_or_register<R: Rng + ?Sized>(
        &mut self,
        field_id: &str,
        store: &mut ParamStore,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        if let Some(&id) = self.entries.get(field_id) {
            return Ok(id);
        }
        if !self.auto_register {
            return Err(Error::UnknownField(field_id.to_string()));
        }
        let id = store.add_normal(format!("{QUERY_PREFIX}{field_id}"), &[hidden], std, rng)?;
        self.entries.insert(field_id.to_string(), id);
        Ok(id)
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, field_id: &str) -> bool {
        self.entries.contains_key(field_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Start and end logits over every position of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanScores {
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
}

impl SpanScores {
    pub fn len(&self) -> usize {
        self.start_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_logits.is_empty()
    }
}

/// A decoded `(start, end)` pair; `(0, 0)` is the null answer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl SpanPrediction {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    pub fn is_null(&self) -> bool {
        self.start == 0 && self.end == 0
    }
}

fn endpoint_logits(g: &mut Graph<'_>, q: Var, h: Var, p: &EndpointParams) -> Result<Var> {
    let c = g.value(q).len();
    let len = g.value(h).dims2().0;
    let q = g.reshape(q, vec![1, c])?;
    let row = match p {
        EndpointParams::Bilinear { w } => {
            let w = g.param(*w);
            let qw = g.matmul(q, w)?;
            g.matmul_nt(qw, h)?
        }
        EndpointParams::Additive { wq, wh, v } => {
            let (wq, wh, v) = (g.param(*wq), g.param(*wh), g.param(*v));
            let hq = g.matmul(h, wh)?;
            let qq = g.matmul(q, wq)?;
            let sum = g.add_row(hq, qq)?;
            let act = g.tanh(sum);
            g.matmul(act, v)?
        }
    };
    g.reshape(row, vec![len])
}

/// Start and end logits for query `q: [c]` against `h: [L×c]`. Positions with
/// `mask[i] == false` receive a large negative constant.
pub fn score_span(g: &mut Graph<'_>, q: Var, h: Var, head: &HeadParams, mask: &[bool]) -> Result<(Var, Var)> {
    let (len, c) = g.value(h).dims2();
    if g.value(q).len() != c {
        return Err(Error::Shape {
            op: "score_span",
            left: g.shape(q).to_vec(),
            right: vec![len, c],
        });
    }
    if mask.len() != len {
        return Err(Error::Shape {
            op: "score_span",
            left: vec![len],
            right: vec![mask.len()],
        });
    }
    let start = endpoint_logits(g, q, h, &head.start)?;
    let end = endpoint_logits(g, q, h, &head.end)?;
    Ok((g.mask_cols(start, mask)?, g.mask_cols(end, mask)?))
}

/// [`score_span`] on plain tensors, for inference.
pub fn score_span_eager(
    store: &ParamStore,
    q: &[f64],
    h: &Tensor,
    head: &HeadParams,
    mask: &[bool],
) -> Result<SpanScores> {
    let mut g = Graph::new(store);
    let qv = g.input(Tensor::vector(q.to_vec())?);
    let hv = g.input(h.clone());
    let (s, e) = score_span(&mut g, qv, hv, head, mask)?;
    Ok(SpanScores {
        start_logits: g.value(s).data().to_vec(),
        end_logits: g.value(e).data().to_vec(),
    })
}

/// Cross entropy of the gold start plus cross entropy of the gold end, each
/// softmaxed over all positions.
pub fn span_loss(g: &mut Graph<'_>, start_logits: Var, end_logits: Var, gold: Span) -> Result<Var> {
    let n = g.value(start_logits).len();
    if gold.start >= n || gold.end >= n {
        return Err(Error::Index {
            index: gold.start.max(gold.end),
            len: n,
        });
    }
    let ls = g.cross_entropy(start_logits, gold.start)?;
    let le = g.cross_entropy(end_logits, gold.end)?;
    g.add(ls, le)
}

/// Best-scoring span among the null pair and every `1 ≤ s ≤ e ≤
/// min(s + max_span_len, n − 1)`, scored by `start[s] + end[e]`. Ties go to
/// the smaller start, then the smaller end.
pub fn predict_span(scores: &SpanScores, max_span_len: usize) -> SpanPrediction {
    let (st, en) = (&scores.start_logits, &scores.end_logits);
    let n = st.len();
    let mut best = SpanPrediction {
        start: 0,
        end: 0,
        score: st[0] + en[0],
    };
    for s in 1..n {
        let last = (s + max_span_len).min(n - 1);
        for e in s..=last {
            let score = st[s] + en[e];
            if score > best.score {
                best = SpanPrediction { start: s, end: e, score };
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_head(c: usize) -> (ParamStore, HeadParams) {
        let mut store = ParamStore::new();
        store.add("span_head/start/w", Tensor::identity(c)).unwrap();
        store.add("span_head/end/w", Tensor::identity(c)).unwrap();
        let head = HeadParams::bind(&store, ScorerKind::Bilinear, c).unwrap();
        (store, head)
    }

    #[test]
    fn orthonormal_rows_pick_matching_position() {
        let (store, head) = identity_head(5);
        let h = Tensor::identity(5);
        let scores = score_span_eager(&store, h.row(3), &h, &head, &[true; 5]).unwrap();
        let start = Tensor::vector(scores.start_logits.clone()).unwrap();
        assert_eq!(start.argmax(), 3);
    }

    #[test]
    fn zero_query_gives_uniform_logits() {
        let (store, head) = identity_head(4);
        let h = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]]).unwrap();
        let scores = score_span_eager(&store, &[0.0; 4], &h, &head, &[true, true]).unwrap();
        assert!(scores.start_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_never_wins() {
        let (store, head) = identity_head(3);
        let h = Tensor::from_rows(&[vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![9.0, 9.0, 9.0]]).unwrap();
        let scores = score_span_eager(&store, &[1.0, 1.0, 1.0], &h, &head, &[true, true, false]).unwrap();
        let p = predict_span(&scores, 30);
        assert!(p.start < 2 && p.end < 2);
    }

    #[test]
    fn uniform_span_loss_is_two_ln_n() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s = g.input(Tensor::full(&[8], 0.7));
        let e = g.input(Tensor::full(&[8], -0.2));
        let l = span_loss(&mut g, s, e, Span::new(3, 5)).unwrap();
        assert!((g.value(l).item() - 2.0 * 8f64.ln()).abs() < 1e-12);
        assert!(span_loss(&mut g, s, e, Span::new(3, 8)).is_err());
    }

    #[test]
    fn predict_span_cases() {
        let null = SpanScores {
            start_logits: vec![5.0, 0.0, 0.0],
            end_logits: vec![5.0, 0.0, 0.0],
        };
        assert!(predict_span(&null, 30).is_null());
        let mut st = vec![0.0; 6];
        let mut en = vec![0.0; 6];
        st[2] = 10.0;
        en[4] = 10.0;
        let p = predict_span(
            &SpanScores {
                start_logits: st,
                end_logits: en,
            },
            2,
        );
        assert_eq!((p.start, p.end), (2, 4));
        // best end lies before best start
        let p = predict_span(
            &SpanScores {
                start_logits: vec![0.0, 0.0, 0.0, 3.5],
                end_logits: vec![0.0, 4.0, 0.0, 1.0],
            },
            30,
        );
        assert_eq!((p.start, p.end), (3, 3));
    }

    #[test]
    fn registry_auto_registration() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut reg = QueryRegistry::new(false);
        assert!(matches!(
            reg.get_or_register("a/x", &mut store, 4, 0.02, &mut rng),
            Err(Error::UnknownField(_))
        ));
        reg.set_auto_register(true);
        let id = reg.get_or_register("a/x", &mut store, 4, 0.02, &mut rng).unwrap();
        assert_eq!(store.name(id), "query/a/x");
        assert_eq!(reg.lookup("a/x").unwrap(), id);
        assert_eq!(QueryRegistry::from_store(&store).lookup("a/x").unwrap(), id);
    }
}
