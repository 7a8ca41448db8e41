//! Entity-level precision, recall and F1 with micro and macro aggregates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::doc_model::{Document, Span};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub field_id: String,
    pub span: Span,
}

impl Entity {
    pub fn new(field_id: impl Into<String>, span: Span) -> Self {
        Entity {
            field_id: field_id.into(),
            span,
        }
    }
}

/// Entities of one document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DocEntities {
    pub doc_id: String,
    pub entities: Vec<Entity>,
}

impl DocEntities {
    /// Gold entities of a document.
    pub fn gold(doc: &Document) -> Self {
        let entities = doc
            .annotations
            .iter()
            .flat_map(|a| a.spans.iter().map(|s| Entity::new(a.field_id.clone(), *s)))
            .collect();
        DocEntities {
            doc_id: doc.doc_id.clone(),
            entities,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

impl FieldScore {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        FieldScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Fields with neither gold nor predicted entities have undefined F1.
    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fields: BTreeMap<String, FieldScore>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub num_documents: usize,
    pub num_gold: usize,
    pub num_predicted: usize,
}

/// Exact-match entity scoring. Documents are paired by id; a prediction
/// counts as a true positive when an unmatched gold entity with the same
/// field and span exists in that document. Duplicate predictions are
/// collapsed. With `schema`, predictions for fields outside it are an error
/// and every schema field is listed in the report.
pub fn entity_f1(pred: &[DocEntities], gold: &[DocEntities], schema: Option<&[String]>) -> Result<EvalReport> {
    let closed: Option<BTreeSet<&str>> = schema.map(|s| s.iter().map(String::as_str).collect());
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    if let Some(s) = schema {
        for f in s {
            counts.entry(f.clone()).or_default();
        }
    }

    let mut by_doc: BTreeMap<&str, (BTreeSet<&Entity>, HashMap<&Entity, usize>)> = BTreeMap::new();
    for d in pred {
        let slot = by_doc.entry(d.doc_id.as_str()).or_default();
        for e in &d.entities {
            if let Some(c) = &closed {
                if !c.contains(e.field_id.as_str()) {
                    return Err(Error::UnknownField(e.field_id.clone()));
                }
            }
            slot.0.insert(e);
        }
    }
    for d in gold {
        let slot = by_doc.entry(d.doc_id.as_str()).or_default();
        for e in &d.entities {
            *slot.1.entry(e).or_default() += 1;
        }
    }

    let (mut num_gold, mut num_pred) = (0, 0);
    for (preds, mut golds) in by_doc.values().cloned() {
        for e in preds {
            num_pred += 1;
            let c = counts.entry(e.field_id.clone()).or_default();
            match golds.get_mut(e) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    c.0 += 1;
                }
                _ => c.1 += 1,
            }
        }
        for (e, n) in golds {
            counts.entry(e.field_id.clone()).or_default().2 += n;
        }
    }
    num_gold += gold.iter().map(|d| d.entities.len()).sum::<usize>();

    let fields: BTreeMap<String, FieldScore> = counts
        .into_iter()
        .map(|(f, (tp, fp, fn_))| (f, FieldScore::from_counts(tp, fp, fn_)))
        .collect();
    let (tp, fp, fn_) = fields
        .values()
        .fold((0, 0, 0), |acc, s| (acc.0 + s.tp, acc.1 + s.fp, acc.2 + s.fn_));
    let (micro_precision, micro_recall, micro_f1) = prf(tp, fp, fn_);
    let defined: Vec<f64> = fields.values().filter(|s| s.is_defined()).map(|s| s.f1).collect();
    let macro_f1 = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(EvalReport {
        fields,
        micro_precision,
        micro_recall,
        micro_f1,
        macro_f1,
        num_documents: by_doc.len(),
        num_gold,
        num_predicted: num_pred,
    })
}

/// A method comparison rendered as aligned text and as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub text: String,
    pub csv: String,
}

/// One row per named report: macro F1, micro F1, then per-field F1 over the
/// union of fields (blank where a report lacks the field).
pub fn compare_report(reports: &[(String, EvalReport)]) -> ComparisonTable {
    let fields: BTreeSet<&str> = reports
        .iter()
        .flat_map(|(_, r)| r.fields.keys().map(String::as_str))
        .collect();
    let mut header = vec!["method".to_string(), "f1_macro".into(), "f1_micro".into()];
    header.extend(fields.iter().map(|f| f.to_string()));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.clone(), format!("{:.4}", r.macro_f1), format!("{:.4}", r.micro_f1)];
            row.extend(fields.iter().map(|f| match r.fields.get(*f) {
                Some(s) if s.is_defined() => format!("{:.4}", s.f1),
                _ => String::new(),
            }));
            row
        })
        .collect();

    let mut csv = String::new();
    for line in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = line.iter().map(|c| csv_cell(c)).collect();
        let _ = writeln!(csv, "{}", cells.join(","));
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            std::iter::once(&header)
                .chain(&rows)
                .map(|r| r[i].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut text = String::new();
    let _ = writeln!(text, "{}", render(&header));
    let _ = writeln!(
        text,
        "{}",
        widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-")
    );
    for r in &rows {
        let _ = writeln!(text, "{}", render(r));
    }
    ComparisonTable { text, csv }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ents(doc: &str, items: &[(&str, usize, usize)]) -> DocEntities {
        DocEntities {
            doc_id: doc.into(),
            entities: items.iter().map(|&(f, s, e)| Entity::new(f, Span::new(s, e))).collect(),
        }
    }

    #[test]
    fn perfect_prediction() {
        let gold = vec![ents("d1", &[("a", 1, 2), ("b", 4, 4)])];
        let r = entity_f1(&gold, &gold, None).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn hand_computed_example() {
        let gold = vec![
            ents("d1", &[("A", 1, 1), ("A", 3, 3), ("B", 5, 6)]),
            ents("d2", &[("A", 2, 2)]),
        ];
        let pred = vec![
            ents("d1", &[("A", 1, 1), ("A", 3, 3), ("A", 8, 8)]),
            ents("d2", &[("A", 2, 2)]),
        ];
        let r = entity_f1(&pred, &gold, None).unwrap();
        assert_eq!(r.micro_precision, 0.75);
        assert_eq!(r.micro_recall, 0.75);
        assert_eq!(r.micro_f1, 0.75);
        assert_eq!(r.fields["A"].f1, 6.0 / 7.0);
        assert_eq!(r.fields["B"].f1, 0.0);
        assert!((r.macro_f1 - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn empty_predictions() {
        let gold = vec![ents("d1", &[("a", 1, 2)])];
        let r = entity_f1(&[], &gold, None).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1), (0.0, 0.0));
    }

    #[test]
    fn duplicates_collapse_and_closed_schema_rejects_unknown() {
        let gold = vec![ents("d", &[("a", 1, 1)])];
        let pred = vec![ents("d", &[("a", 1, 1), ("a", 1, 1)])];
        let r = entity_f1(&pred, &gold, None).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        let schema = vec!["a".to_string()];
        let bad = vec![ents("d", &[("z", 1, 1)])];
        assert!(matches!(entity_f1(&bad, &gold, Some(&schema)), Err(Error::UnknownField(_))));
    }

    #[test]
    fn absent_fields_excluded_from_macro() {
        let gold = vec![ents("d", &[("a", 1, 1)])];
        let schema = vec!["a".to_string(), "never".to_string()];
        let r = entity_f1(&gold, &gold, Some(&schema)).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert!(r.fields.contains_key("never"));
    }

    #[test]
    fn comparison_table_rows() {
        let gold = vec![ents("d", &[("a", 1, 1)])];
        let r1 = entity_f1(&gold, &gold, None).unwrap();
        let r2 = entity_f1(&[], &ents_vec(), None).unwrap();
        let t = compare_report(&[("span".into(), r1.clone()), ("seqlabel".into(), r2)]);
        assert_eq!(t.csv.lines().count(), 3);
        assert!(t.csv.starts_with("method,f1_macro,f1_micro,a,b"));
        assert!(t.csv.contains("seqlabel,0.0000,0.0000,,0.0000"));
        let single = compare_report(&[("only".into(), r1)]);
        assert_eq!(single.text.lines().count(), 3);
    }

    fn ents_vec() -> Vec<DocEntities> {
        vec![ents("d", &[("b", 1, 1)])]
    }
}
