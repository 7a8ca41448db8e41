use serde::{Deserialize, Serialize};

use crate::doc_model::Span;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::span_head::{predict_span, score_span, score_span_eager, span_loss, HeadParams, SpanPrediction};

pub const DEFAULT_MAX_CHAIN_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NullStop,
    RepeatStop,
    MaxLenStop,
}

/// Ordered answers decoded for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkChain {
    pub spans: Vec<SpanPrediction>,
    pub termination: Termination,
    /// Number of scoring steps taken.
    pub steps: usize,
}

impl LinkChain {
    pub fn span_list(&self) -> Vec<Span> {
        self.spans.iter().map(SpanPrediction::span).collect()
    }
}

/// Decoding limits for [`decode_chain`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeLimits {
    pub max_span_len: usize,
    pub max_chain_len: usize,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        DecodeLimits {
            max_span_len: crate::span_head::DEFAULT_MAX_SPAN_LEN,
            max_chain_len: DEFAULT_MAX_CHAIN_LEN,
        }
    }
}

/// Recursive extraction: the first span is scored with the field query,
/// every later one with the hidden state of the previous span's start token.
/// Stops on the null span, on a span already in the chain, or after
/// `max_chain_len` accepted spans. Stopping spans are not appended.
pub fn decode_chain(
    store: &ParamStore,
    query: &[f64],
    hidden: &Tensor,
    head: &HeadParams,
    mask: &[bool],
    limits: DecodeLimits,
) -> Result<LinkChain> {
    decode_chain_with(query, hidden, limits, |q| score_span_eager(store, q, hidden, head, mask))
}

/// [`decode_chain`] over an arbitrary scoring function.
pub fn decode_chain_with<F>(query: &[f64], hidden: &Tensor, limits: DecodeLimits, mut score: F) -> Result<LinkChain>
where
    F: FnMut(&[f64]) -> Result<crate::span_head::SpanScores>,
{
    let mut spans: Vec<SpanPrediction> = Vec::new();
    let mut q = query.to_vec();
    let mut steps = 0;
    let termination = loop {
        if spans.len() >= limits.max_chain_len {
            break Termination::MaxLenStop;
        }
        let scores = score(&q)?;
        steps += 1;
        let pred = predict_span(&scores, limits.max_span_len);
        if pred.is_null() {
            break Termination::NullStop;
        }
        if spans.iter().any(|s| s.start == pred.start && s.end == pred.end) {
            break Termination::RepeatStop;
        }
        q = hidden.row(pred.start).to_vec();
        spans.push(pred);
    };
    Ok(LinkChain {
        spans,
        termination,
        steps,
    })
}

/// Teacher-forced chain loss: step 0 scores with the field query against
/// the first gold span, step i scores with the hidden state of gold start i
/// against gold span i+1, and the last step targets the null span. Returns
/// the mean over the `gold.len() + 1` steps.
pub fn chain_loss(
    g: &mut Graph<'_>,
    hidden: Var,
    query: Var,
    gold: &[Span],
    head: &HeadParams,
    mask: &[bool],
) -> Result<Var> {
    let len = g.value(hidden).dims2().0;
    for s in gold {
        if s.start < 1 || s.start > s.end || s.end >= len {
            return Err(Error::Annotation(format!(
                "gold span [{}, {}] invalid for sequence length {len}",
                s.start, s.end
            )));
        }
    }
    let mut steps = Vec::with_capacity(gold.len() + 1);
    let mut q = query;
    for target in gold.iter().copied().chain(std::iter::once(Span::NULL)) {
        let (st, en) = score_span(g, q, hidden, head, mask)?;
        steps.push(span_loss(g, st, en, target)?);
        if !target.is_null() {
            q = g.row(hidden, target.start)?;
        }
    }
    let total = g.add_all(&steps)?;
    Ok(g.scale(total, 1.0 / steps.len() as f64))
}
