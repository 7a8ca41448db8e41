#![allow(dead_code)]

use docspan::doc_model::{BoundingBox, Document, EntityAnnotation, Span, Token};
use rand::Rng;

/// Random non-overlapping spans over `1..=n`, in random order.
pub fn random_spans<R: Rng>(rng: &mut R, n: usize, max: usize) -> Vec<Span> {
    let mut taken = vec![false; n + 1];
    let mut spans = Vec::new();
    for _ in 0..max {
        if n == 0 {
            break;
        }
        let s = rng.random_range(1..=n);
        let e = (s + rng.random_range(0..3)).min(n);
        if (s..=e).any(|i| taken[i]) {
            continue;
        }
        (s..=e).for_each(|i| taken[i] = true);
        spans.push(Span::new(s, e));
    }
    spans
}

/// Document with `n` random tokens and random annotations of `fields`.
/// Spans of different fields may overlap; spans within a field do not.
pub fn random_document<R: Rng>(rng: &mut R, doc_id: &str, n: usize, fields: &[String]) -> Document {
    let tokens = (0..n)
        .map(|i| {
            let x0 = rng.random_range(0..900);
            let y0 = rng.random_range(0..980);
            Token {
                text: format!("w{}", rng.random_range(0..20)),
                bbox: BoundingBox::new(x0, y0, x0 + rng.random_range(1..100), y0 + 20).unwrap(),
                line_id: i as u32,
            }
        })
        .collect();
    let mut annotations = Vec::new();
    for f in fields {
        if !rng.random_bool(0.7) {
            continue;
        }
        let spans = random_spans(rng, n, 4);
        if !spans.is_empty() {
            annotations.push(EntityAnnotation {
                field_id: f.clone(),
                spans,
            });
        }
    }
    Document::new(doc_id, 600, 800, tokens, annotations).unwrap()
}

/// Exhaustive search over every `(s, e)` with `s ≤ e < n`, keeping the
/// null pair and pairs with `1 ≤ s`, `e − s ≤ max_span_len`. Candidates are
/// visited in lexicographic order and only a strictly larger score
/// replaces the incumbent.
pub fn brute_force_span(start: &[f64], end: &[f64], max_span_len: usize) -> (usize, usize) {
    let n = start.len();
    let mut best: Option<(f64, usize, usize)> = None;
    for s in 0..n {
        for e in s..n {
            let valid = (s == 0 && e == 0) || (s >= 1 && e - s <= max_span_len);
            if !valid {
                continue;
            }
            let score = start[s] + end[e];
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s, e));
            }
        }
    }
    let (_, s, e) = best.unwrap();
    (s, e)
}

#[derive(Debug, PartialEq, Eq)]
pub enum Stop {
    Null,
    Repeat,
    MaxLen,
}

/// Step-by-step simulation of recursive decoding with a bilinear scorer,
/// computing every score with explicit loops over the first `real`
/// positions. Returns the accepted spans, the stop reason and the number
/// of scoring steps.
pub fn reference_chain(
    query: &[f64],
    hidden: &[Vec<f64>],
    w_start: &[Vec<f64>],
    w_end: &[Vec<f64>],
    real: usize,
    max_span_len: usize,
    max_chain_len: usize,
) -> (Vec<(usize, usize)>, Stop, usize) {
    let bilinear = |q: &[f64], w: &[Vec<f64>]| -> Vec<f64> {
        (0..real)
            .map(|i| {
                let mut acc = 0.0;
                for (j, qj) in q.iter().enumerate() {
                    for (k, hk) in hidden[i].iter().enumerate() {
                        acc += qj * w[j][k] * hk;
                    }
                }
                acc
            })
            .collect()
    };
    let mut chain: Vec<(usize, usize)> = Vec::new();
    let mut q = query.to_vec();
    let mut steps = 0;
    loop {
        if chain.len() == max_chain_len {
            return (chain, Stop::MaxLen, steps);
        }
        steps += 1;
        let (s, e) = brute_force_span(&bilinear(&q, w_start), &bilinear(&q, w_end), max_span_len);
        if (s, e) == (0, 0) {
            return (chain, Stop::Null, steps);
        }
        if chain.contains(&(s, e)) {
            return (chain, Stop::Repeat, steps);
        }
        chain.push((s, e));
        q = hidden[s].clone();
    }
}

/// Mean over kept rows of `log Σ exp(row) − row[gold]`, one token at a time.
pub fn per_token_ce(logits: &[Vec<f64>], gold: &[usize], keep: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for ((row, &t), &k) in logits.iter().zip(gold).zip(keep) {
        if !k {
            continue;
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[t];
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Small-integer matrix, so bilinear scores are exact in f64 and ties are
/// common.
pub fn int_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-2..=2) as f64).collect())
        .collect()
}
