//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero when a blocking criterion fails.
//!
//! `cargo test -p docspan --test acceptance -- 6 7` runs a subset.
//! Criterion 10 needs `CORD_ROOT` pointing at an unpacked CORD release.

#[allow(dead_code)]
mod common;

use common::{brute_force_span, int_matrix, reference_chain, Stop};
use docspan::datasets::{
    gen_synthetic_split, load_cord, read_jsonl, write_jsonl, CordOptions, Dataset, Split, SplitSizes, SynthConfig,
};
use docspan::doc_model::{split_line_to_words, BoundingBox, Document, EntityAnnotation, Span, Token, Vocab};
use docspan::encoder::EncoderConfig;
use docspan::eval::{entity_f1, DocEntities, Entity};
use docspan::model::{Model, ModelConfig, ModelKind};
use docspan::numerics::{grad_check, AdamConfig, Graph, ParamStore, Tensor, DEFAULT_EPSILON};
use docspan::recursive::{decode_chain, decode_chain_with, pretrain_spans, DecodeLimits, Termination};
use docspan::seqlabel::{tag_loss, tag_mask, TagSet};
use docspan::span_head::{predict_span, span_loss, HeadParams, ScorerKind, SpanScores};
use docspan::train::{fit, Example, TrainConfig, Trainer};
use docspan::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

enum Kind {
    Blocking,
    Reported,
    Optional,
}

struct Criterion {
    id: u32,
    name: &'static str,
    kind: Kind,
    run: fn() -> Option<Outcome>,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "gradient integrity", kind: Kind::Blocking, run: gradient_integrity },
        Criterion { id: 2, name: "decoder oracle equivalence", kind: Kind::Blocking, run: decoder_oracle },
        Criterion { id: 3, name: "termination", kind: Kind::Blocking, run: termination },
        Criterion { id: 4, name: "loss closed forms", kind: Kind::Blocking, run: loss_closed_forms },
        Criterion { id: 5, name: "metric oracle", kind: Kind::Blocking, run: metric_oracle },
        Criterion { id: 6, name: "overfit capability", kind: Kind::Blocking, run: overfit },
        Criterion { id: 7, name: "generalization smoke test", kind: Kind::Blocking, run: generalization },
        Criterion { id: 8, name: "directional comparisons", kind: Kind::Reported, run: directional },
        Criterion { id: 9, name: "geometry", kind: Kind::Blocking, run: geometry },
        Criterion { id: 10, name: "CORD", kind: Kind::Optional, run: cord },
    ];
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(outcome(false, format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        let (status, note) = match (&result, &c.kind) {
            (None, _) => ("SKIP", ""),
            (Some(o), Kind::Reported) => (if o.pass { "PASS" } else { "FAIL" }, " (non-blocking)"),
            (Some(o), _) => (if o.pass { "PASS" } else { "FAIL" }, ""),
        };
        let detail = result.as_ref().map_or("CORD_ROOT not set", |o| o.detail.as_str());
        println!("[{status}] {:>2} {}{note}: {detail} ({secs:.1}s)", c.id, c.name);
        if status == "FAIL" && !matches!(c.kind, Kind::Reported) {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("blocking failures: {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn small_doc() -> Document {
    let words = ["Total", "12.50", "Tax", "1.10", "Cash"];
    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, w)| Token {
            text: w.to_string(),
            bbox: BoundingBox::new(120 * i as i64, 30 * (i as i64 / 2), 120 * i as i64 + 90, 30 * (i as i64 / 2) + 20)
                .unwrap(),
            line_id: (i / 2) as u32,
        })
        .collect();
    Document::new(
        "grad",
        1000,
        1000,
        tokens,
        vec![
            EntityAnnotation {
                field_id: "r/amount".into(),
                spans: vec![Span::new(2, 2), Span::new(4, 4)],
            },
            EntityAnnotation {
                field_id: "r/key".into(),
                spans: vec![Span::new(1, 1), Span::new(3, 3)],
            },
        ],
    )
    .unwrap()
}

/// Checked at weight scale 0.3: at the 0.02 training initialization the
/// query/key gradients are ~1e-8, where central-difference rounding noise
/// alone exceeds the tolerance under the checker's 1e-8 floor.
const GRAD_CHECK_STD: f64 = 0.3;

fn gradient_integrity() -> Option<Outcome> {
    let doc = small_doc();
    assert_eq!(doc.seq_len(), 6);
    let fields: Vec<String> = vec!["r/amount".into(), "r/key".into()];
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in [ModelKind::Span, ModelKind::SeqLabel] {
        let mut worst = 0.0_f64;
        let mut scalars = 0;
        for seed in [1, 2] {
            let config = ModelConfig {
                kind,
                encoder: EncoderConfig {
                    hidden_size: 8,
                    num_layers: 1,
                    num_heads: 2,
                    max_seq_len: 8,
                    dropout: 0.0,
                    init_std: GRAD_CHECK_STD,
                    ..EncoderConfig::default()
                },
                ..ModelConfig::default()
            };
            let model = Model::new(config, Vocab::from_documents([&doc]), &fields, seed).unwrap();
            let report = grad_check(
                |g: &mut Graph<'_>| model.loss(g, &doc, &fields, None),
                &model.store,
                DEFAULT_EPSILON,
                1e-4,
            )
            .unwrap();
            pass &= report.passed();
            worst = worst.max(report.max_rel_error);
            scalars = model.store.num_scalars();
        }
        parts.push(format!("{kind} max rel err {worst:.1e} ({scalars} scalars)"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    Some(outcome(
        pass,
        format!("{}; init std {GRAD_CHECK_STD}, 2 seeds, tolerance 1e-4", parts.join(", ")),
    ))
}

// ---------------------------------------------------------------- 2

fn decoder_oracle() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut chain_mismatch = 0;
    let mut stops = [0usize; 3];
    for _ in 0..200 {
        let c = rng.random_range(1..=4);
        let n = rng.random_range(2..=16);
        let real = rng.random_range(1..=n);
        let hidden = int_matrix(&mut rng, n, c);
        let w_start = int_matrix(&mut rng, c, c);
        let w_end = int_matrix(&mut rng, c, c);
        let query = int_matrix(&mut rng, 1, c).remove(0);
        let mut store = ParamStore::new();
        store.add("span_head/start/w", Tensor::new(vec![c, c], w_start.concat()).unwrap()).unwrap();
        store.add("span_head/end/w", Tensor::new(vec![c, c], w_end.concat()).unwrap()).unwrap();
        let head = HeadParams::bind(&store, ScorerKind::Bilinear, c).unwrap();
        let limits = DecodeLimits {
            max_span_len: rng.random_range(1..=5),
            max_chain_len: rng.random_range(1..=6),
        };
        let mask: Vec<bool> = (0..n).map(|i| i < real).collect();
        let h = Tensor::new(vec![n, c], hidden.concat()).unwrap();
        let got = decode_chain(&store, &query, &h, &head, &mask, limits).unwrap();
        let (spans, stop, steps) =
            reference_chain(&query, &hidden, &w_start, &w_end, real, limits.max_span_len, limits.max_chain_len);
        let expected = match stop {
            Stop::Null => Termination::NullStop,
            Stop::Repeat => Termination::RepeatStop,
            Stop::MaxLen => Termination::MaxLenStop,
        };
        let got_spans: Vec<(usize, usize)> = got.spans.iter().map(|p| (p.start, p.end)).collect();
        if got_spans != spans || got.steps != steps || got.termination != expected {
            chain_mismatch += 1;
        }
        stops[stop as usize] += 1;
    }

    let mut span_mismatch = 0;
    for i in 0..500 {
        let n = rng.random_range(1..=32);
        let l = rng.random_range(0..=12);
        // alternate continuous and small-integer scores; the latter tie often
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if i % 2 == 0 {
                        rng.random_range(-10.0..10.0)
                    } else {
                        rng.random_range(-2..=2) as f64
                    }
                })
                .collect()
        };
        let (st, en) = (draw(&mut rng), draw(&mut rng));
        let p = predict_span(
            &SpanScores {
                start_logits: st.clone(),
                end_logits: en.clone(),
            },
            l,
        );
        if (p.start, p.end) != brute_force_span(&st, &en, l) {
            span_mismatch += 1;
        }
    }
    Some(outcome(
        chain_mismatch == 0 && span_mismatch == 0,
        format!(
            "{chain_mismatch}/200 chain mismatches (null/repeat/max-len stops {stops:?}), {span_mismatch}/500 span mismatches"
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn termination() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    let mut max_steps_seen = 0;
    for case in 0..1000u64 {
        let n = rng.random_range(2..=24);
        let limits = DecodeLimits {
            max_span_len: rng.random_range(0..=6),
            max_chain_len: rng.random_range(1..=40),
        };
        let c = 4;
        let hidden: Vec<f64> = (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = Tensor::new(vec![n, c], hidden).unwrap();
        let mut local = ChaCha8Rng::seed_from_u64(case);
        let mut step = 0usize;
        let chain = decode_chain_with(&[0.5; 4], &h, limits, |q| {
            step += 1;
            let mut st = vec![0.0; n];
            let mut en = vec![0.0; n];
            match case % 4 {
                // walk through distinct spans, never proposing the null one
                0 => {
                    let s = 1 + (step - 1) % (n - 1);
                    st[s] = 1e9;
                    en[s] = 1e9;
                    st[0] = -1e9;
                }
                // large random scores
                1 => {
                    for v in st.iter_mut().chain(en.iter_mut()) {
                        *v = local.random_range(-1e8..1e8);
                    }
                }
                // scores that depend on the query, as a real scorer's do
                2 => {
                    for i in 0..n {
                        st[i] = q.iter().sum::<f64>() * i as f64 + local.random_range(-1.0..1.0);
                        en[i] = -(i as f64) + local.random_range(-1.0..1.0);
                    }
                    st[0] = f64::MIN / 4.0;
                }
                // the same span every step
                _ => {
                    st[n - 1] = 3.0;
                    en[n - 1] = 3.0;
                }
            }
            Ok(SpanScores {
                start_logits: st,
                end_logits: en,
            })
        })
        .unwrap();
        max_steps_seen = max_steps_seen.max(chain.steps);
        let mut seen = HashSet::new();
        let ok = chain.steps <= limits.max_chain_len + 1
            && chain.spans.len() <= limits.max_chain_len
            && chain.spans.iter().all(|p| !p.is_null() && seen.insert((p.start, p.end)));
        if !ok {
            bad += 1;
        }
    }
    Some(outcome(
        bad == 0,
        format!("{bad}/1000 violations; longest run {max_steps_seen} steps"),
    ))
}

// ---------------------------------------------------------------- 4

fn loss_closed_forms() -> Option<Outcome> {
    let store = ParamStore::new();
    let mut worst_span = 0.0_f64;
    for n in 1..=64 {
        for gold in [Span::new(0, 0), Span::new(n / 2, n - 1)] {
            let mut g = Graph::new(&store);
            let s = g.input(Tensor::zeros(&[n]));
            let e = g.input(Tensor::zeros(&[n]));
            let l = span_loss(&mut g, s, e, gold).unwrap();
            worst_span = worst_span.max((g.value(l).item() - 2.0 * (n as f64).ln()).abs());
        }
    }
    let mut worst_tag = 0.0_f64;
    for f in 1..=10 {
        let tags = TagSet::new((0..f).map(|i| format!("x/{i}")).collect());
        let rows = 9;
        let mut g = Graph::new(&store);
        let logits = g.input(Tensor::zeros(&[rows, tags.len()]));
        let gold: Vec<usize> = (0..rows).map(|i| i % tags.len()).collect();
        let mask = tag_mask(&[true, true, true, true, true, true, true, false, false]);
        let l = tag_loss(&mut g, logits, &gold, &mask).unwrap();
        worst_tag = worst_tag.max((g.value(l).item() - ((2 * f + 1) as f64).ln()).abs());
    }
    Some(outcome(
        worst_span <= 1e-9 && worst_tag <= 1e-9,
        format!("span |Δ| ≤ {worst_span:.1e} (n = 1..64), tag |Δ| ≤ {worst_tag:.1e} (F = 1..10)"),
    ))
}

// ---------------------------------------------------------------- 5

fn gold_vs_gold(ds: &Dataset) -> (f64, f64) {
    let gold: Vec<DocEntities> = ds.documents.iter().map(DocEntities::gold).collect();
    let r = entity_f1(&gold, &gold, Some(&ds.schema.field_ids)).unwrap();
    (r.micro_f1, r.macro_f1)
}

fn metric_oracle() -> Option<Outcome> {
    let gold = vec![DocEntities {
        doc_id: "d".into(),
        entities: vec![
            Entity::new("A", Span::new(1, 1)),
            Entity::new("A", Span::new(3, 4)),
            Entity::new("A", Span::new(6, 6)),
            Entity::new("B", Span::new(8, 9)),
        ],
    }];
    let pred = vec![DocEntities {
        doc_id: "d".into(),
        entities: vec![
            Entity::new("A", Span::new(1, 1)),
            Entity::new("A", Span::new(3, 4)),
            Entity::new("A", Span::new(6, 6)),
            Entity::new("A", Span::new(10, 10)),
        ],
    }];
    let r = entity_f1(&pred, &gold, None).unwrap();
    let hand = r.micro_f1 == 0.75 && (r.macro_f1 - 3.0 / 7.0).abs() <= f64::EPSILON;

    let sizes = SplitSizes {
        train: 50,
        dev: 20,
        test: 20,
    };
    let mut sets = 0;
    let mut perfect = true;
    for config in [
        SynthConfig::receipts(1, sizes),
        SynthConfig::invoices(1, sizes),
        SynthConfig::rare_fields(1, sizes),
    ] {
        for split in Split::ALL {
            perfect &= gold_vs_gold(&gen_synthetic_split(&config, split).unwrap()) == (1.0, 1.0);
            sets += 1;
        }
    }
    Some(outcome(
        hand && perfect,
        format!(
            "worked example micro {} macro {:.16} (3/7 = {:.16}); gold-vs-gold 1.0/1.0 on {sets} synthetic splits: {perfect}",
            r.micro_f1,
            r.macro_f1,
            3.0 / 7.0
        ),
    ))
}

// ---------------------------------------------------------------- 6

fn encoder(hidden_size: usize, num_layers: usize, dropout: f64) -> EncoderConfig {
    EncoderConfig {
        hidden_size,
        num_layers,
        num_heads: 4,
        max_seq_len: 128,
        dropout,
        ..EncoderConfig::default()
    }
}

fn train_config(epochs: usize, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn split(config: &SynthConfig, split: Split) -> Dataset {
    let mut ds = gen_synthetic_split(config, split).unwrap();
    let cut = ds.truncate(128);
    assert_eq!(cut, 0, "synthetic documents should fit the encoder");
    ds
}

fn overfit() -> Option<Outcome> {
    let config = SynthConfig::receipts(
        1,
        SplitSizes {
            train: 20,
            dev: 0,
            test: 0,
        },
    );
    let ds = split(&config, Split::Train);
    let fields = &ds.schema.field_ids;
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in [ModelKind::Span, ModelKind::SeqLabel] {
        let start = Instant::now();
        let mc = ModelConfig {
            kind,
            encoder: encoder(64, 2, 0.0),
            ..ModelConfig::default()
        };
        let mut model = Model::new(mc, Vocab::from_documents(&ds.documents), fields, 0).unwrap();
        let mut tc = train_config(usize::MAX, 4, 1e-3);
        tc.max_steps = Some(500);
        let examples: Vec<Example<'_>> = ds.documents.iter().map(|doc| Example { doc, fields }).collect();
        let mut trainer = Trainer::new(tc, 0).unwrap();
        let mut micro = 0.0;
        let mut epoch = 0;
        while !trainer.exhausted() {
            epoch += 1;
            trainer.epoch(&mut model, &examples, epoch).unwrap();
            if epoch % 5 == 0 || trainer.exhausted() {
                micro = model.evaluate(&ds.documents, fields, Execution::default()).unwrap().micro_f1;
                if micro == 1.0 {
                    break;
                }
            }
        }
        let elapsed = start.elapsed();
        pass &= micro == 1.0 && elapsed < Duration::from_secs(300);
        parts.push(format!(
            "{kind}: train micro {micro:.3} after {} steps in {:.1}s",
            trainer.steps(),
            elapsed.as_secs_f64()
        ));
    }
    Some(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- 7

fn generalization() -> Option<Outcome> {
    let start = Instant::now();
    let config = SynthConfig::receipts(
        7,
        SplitSizes {
            train: 200,
            dev: 0,
            test: 50,
        },
    );
    let (train, test) = (split(&config, Split::Train), split(&config, Split::Test));
    let mc = ModelConfig {
        kind: ModelKind::Span,
        encoder: encoder(64, 2, 0.1),
        ..ModelConfig::default()
    };
    let mut model = Model::new(mc, Vocab::from_documents(&train.documents), &train.schema.field_ids, 0).unwrap();
    // no dev split: the final parameters are evaluated
    fit(&mut model, &train, None, &train_config(40, 8, 1e-3), 0).unwrap();
    let report = model.evaluate(&test.documents, &test.schema.field_ids, Execution::default()).unwrap();
    let elapsed = start.elapsed();
    Some(outcome(
        report.micro_f1 >= 0.90 && elapsed < Duration::from_secs(1800),
        format!(
            "span test micro {:.3} (macro {:.3}) after 40 epochs; threshold 0.90",
            report.micro_f1, report.macro_f1
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn directional() -> Option<Outcome> {
    const SEEDS: [u64; 3] = [1, 2, 3];
    // rare fields: span extraction against the tagger, by macro F1
    let (mut span_macro, mut tag_macro) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let config = SynthConfig::rare_fields(
            seed,
            SplitSizes {
                train: 100,
                dev: 0,
                test: 50,
            },
        );
        let (train, test) = (split(&config, Split::Train), split(&config, Split::Test));
        let rare_instances: usize = train
            .documents
            .iter()
            .flat_map(|d| &d.annotations)
            .filter(|a| ["rare/ref", "rare/memo", "rare/fee"].contains(&a.field_id.as_str()))
            .map(|a| a.spans.len())
            .max()
            .unwrap_or(0);
        assert!(rare_instances <= 5);
        for (kind, out) in [(ModelKind::Span, &mut span_macro), (ModelKind::SeqLabel, &mut tag_macro)] {
            let mc = ModelConfig {
                kind,
                encoder: encoder(64, 2, 0.1),
                ..ModelConfig::default()
            };
            let fields = &train.schema.field_ids;
            let mut model = Model::new(mc, Vocab::from_documents(&train.documents), fields, seed).unwrap();
            // long enough for both models to fit the training set
            fit(&mut model, &train, None, &train_config(60, 8, 1e-3), seed).unwrap();
            out.push(model.evaluate(&test.documents, fields, Execution::default()).unwrap().macro_f1);
        }
    }

    // span pre-training on invoices, then fine-tuning on a small receipt set
    let (mut pre_micro, mut scratch_micro) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let source_config = SynthConfig::invoices(
            100 + seed,
            SplitSizes {
                train: 200,
                dev: 0,
                test: 0,
            },
        );
        let target_config = SynthConfig::receipts(
            200 + seed,
            SplitSizes {
                train: 30,
                dev: 0,
                test: 50,
            },
        );
        let source_data = split(&source_config, Split::Train);
        let (train, test) = (split(&target_config, Split::Train), split(&target_config, Split::Test));
        let fields = &train.schema.field_ids;
        let mc = ModelConfig {
            kind: ModelKind::Span,
            encoder: encoder(64, 2, 0.1),
            ..ModelConfig::default()
        };
        let tc = train_config(30, 8, 1e-3);

        let mut source = Model::new(mc.clone(), Vocab::from_documents(&source_data.documents), &[], seed).unwrap();
        pretrain_spans(&mut source, &[&source_data], &train_config(10, 8, 1e-3), seed).unwrap();
        let mut tuned = Model::init_from(&source, mc.clone(), &train.documents, &[], seed).unwrap();
        fit(&mut tuned, &train, None, &tc, seed).unwrap();
        pre_micro.push(tuned.evaluate(&test.documents, fields, Execution::default()).unwrap().micro_f1);

        let mut scratch = Model::new(mc, Vocab::from_documents(&train.documents), fields, seed).unwrap();
        fit(&mut scratch, &train, None, &tc, seed).unwrap();
        scratch_micro.push(scratch.evaluate(&test.documents, fields, Execution::default()).unwrap().micro_f1);
    }

    let rare_ok = mean(&span_macro) >= mean(&tag_macro);
    let pre_ok = mean(&pre_micro) >= mean(&scratch_micro);
    Some(outcome(
        rare_ok && pre_ok,
        format!(
            "rare-field macro span {:.3} [{}] vs tagger {:.3} [{}] ({}); pretrained micro {:.3} [{}] vs scratch {:.3} [{}] ({})",
            mean(&span_macro),
            fmt(&span_macro),
            mean(&tag_macro),
            fmt(&tag_macro),
            if rare_ok { "holds" } else { "does not hold" },
            mean(&pre_micro),
            fmt(&pre_micro),
            mean(&scratch_micro),
            fmt(&scratch_micro),
            if pre_ok { "holds" } else { "does not hold" },
        ),
    ))
}

// ---------------------------------------------------------------- 9

fn geometry() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = 0;
    for _ in 0..1000 {
        let (a, c) = (rng.random_range(0..=1000), rng.random_range(0..=1000));
        let (b, d) = (rng.random_range(0..=1000), rng.random_range(0..=1000));
        let line = BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap();
        let words: Vec<String> = (0..rng.random_range(1..=8))
            .map(|_| "x".repeat(rng.random_range(1..=10)))
            .collect();
        let boxes = split_line_to_words(line, &words).unwrap();
        let k = words.len() as i64;
        let inside = boxes.iter().all(|w| {
            w.y0 == line.y0 && w.y1 == line.y1 && w.x0 <= w.x1 && line.x0 <= w.x0 && w.x1 <= line.x1
        });
        let ordered = boxes.windows(2).all(|p| p[0].x1 <= p[1].x0);
        let covered: i64 = boxes.iter().map(|w| w.width() as i64).sum::<i64>()
            + boxes.windows(2).map(|p| (p[1].x0 - p[0].x1) as i64).sum::<i64>();
        let ends = (boxes[0].x0 as i64 - line.x0 as i64).abs() <= 1
            && (boxes[boxes.len() - 1].x1 as i64 - line.x1 as i64).abs() <= 1;
        if !(boxes.len() == words.len() && inside && ordered && ends && (covered - line.width() as i64).abs() < k) {
            bad += 1;
        }
    }
    let example = split_line_to_words(BoundingBox::new(0, 0, 100, 10).unwrap(), &["ab", "c"]).unwrap();
    let worked = example[0].coords() == [0, 0, 50, 10] && example[1].coords() == [75, 0, 100, 10];
    Some(outcome(
        bad == 0 && worked,
        format!(
            "{bad}/1000 lines violate the partition invariants; worked example {:?} {:?}",
            example[0].coords(),
            example[1].coords()
        ),
    ))
}

// ---------------------------------------------------------------- 10

fn cord() -> Option<Outcome> {
    let root = std::env::var_os("CORD_ROOT")?;
    let root = Path::new(&root);
    let mut parts = Vec::new();
    let mut pass = true;
    for (split, expected) in [(Split::Train, 800), (Split::Dev, 100), (Split::Test, 100)] {
        let load = load_cord(root, split, &CordOptions::default()).unwrap();
        let ds = &load.dataset;
        let scores = gold_vs_gold(ds);
        let mut bytes = Vec::new();
        write_jsonl(ds, &mut bytes).unwrap();
        let lossless = read_jsonl(&bytes[..], Path::new("memory")).unwrap() == *ds;
        pass &= ds.len() == expected && load.errors.is_empty() && scores == (1.0, 1.0) && lossless;
        parts.push(format!(
            "{split}: {} docs ({} skipped), gold-vs-gold {:.3}/{:.3}, round trip {}",
            ds.len(),
            load.errors.len(),
            scores.0,
            scores.1,
            if lossless { "lossless" } else { "LOSSY" }
        ));
    }
    Some(outcome(pass, parts.join("; ")))
}
