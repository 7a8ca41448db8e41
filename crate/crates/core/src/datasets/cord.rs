//! Import of CORD receipt ground truth.
//!
//! Each receipt is a JSON file with a `valid_line` list; every line carries a
//! `category` and `words`, each word a `text` and a quadrilateral `quad`
//! (`x1..x4`, `y1..y4`). Page size comes from `meta.image_size` unless
//! overridden.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{Dataset, Split};
use crate::doc_model::{normalize_box, Document, EntityAnnotation, FieldSchema, PixelBox, Span, Token};
use crate::error::{Error, Result};

pub const CORD_DATASET_ID: &str = "cord";

/// The 30 CORD v2 categories.
pub const CORD_CATEGORIES: [&str; 30] = [
    "menu.cnt",
    "menu.discountprice",
    "menu.etc",
    "menu.itemsubtotal",
    "menu.nm",
    "menu.num",
    "menu.price",
    "menu.sub_cnt",
    "menu.sub_etc",
    "menu.sub_nm",
    "menu.sub_price",
    "menu.sub_unitprice",
    "menu.unitprice",
    "menu.vatyn",
    "sub_total.discount_price",
    "sub_total.etc",
    "sub_total.othersvc_price",
    "sub_total.service_price",
    "sub_total.subtotal_price",
    "sub_total.tax_price",
    "total.cashprice",
    "total.changeprice",
    "total.creditcardprice",
    "total.emoneyprice",
    "total.menuqty_cnt",
    "total.menutype_cnt",
    "total.total_etc",
    "total.total_price",
    "void_menu.nm",
    "void_menu.price",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CordOptions {
    /// Page size used instead of the image metadata.
    pub page_size: Option<(u32, u32)>,
}

/// Loaded split plus per-file problems that were skipped.
#[derive(Clone, Debug)]
pub struct CordLoad {
    pub dataset: Dataset,
    pub errors: Vec<(PathBuf, String)>,
}

#[derive(Deserialize)]
struct Quad {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    x3: f64,
    y3: f64,
    x4: f64,
    y4: f64,
}

#[derive(Deserialize)]
struct Word {
    quad: Quad,
    text: String,
}

#[derive(Deserialize)]
struct Line {
    #[serde(default)]
    words: Vec<Word>,
    category: String,
}

#[derive(Deserialize)]
struct ImageSize {
    width: f64,
    height: f64,
}

#[derive(Deserialize, Default)]
struct Meta {
    image_size: Option<ImageSize>,
}

#[derive(Deserialize)]
struct Receipt {
    #[serde(default)]
    valid_line: Vec<Line>,
    #[serde(default)]
    meta: Meta,
}

fn expected_size(split: Split) -> usize {
    match split {
        Split::Train => 800,
        Split::Dev | Split::Test => 100,
    }
}

fn split_dir(root: &Path, split: Split) -> PathBuf {
    let name = split.as_str();
    let nested = root.join(name).join("json");
    if nested.is_dir() {
        nested
    } else {
        root.join(name)
    }
}

fn parse_receipt(doc_id: String, text: &str, options: &CordOptions) -> Result<Document> {
    let receipt: Receipt = serde_json::from_str(text).map_err(|e| Error::Annotation(e.to_string()))?;
    let (width, height) = match (options.page_size, &receipt.meta.image_size) {
        (Some((w, h)), _) => (w as f64, h as f64),
        (None, Some(s)) => (s.width, s.height),
        (None, None) => return Err(Error::Annotation("no image size; pass a page size override".into())),
    };

    // Lines in reading order: by top edge, then left edge.
    let mut lines: Vec<(PixelBox, &Line)> = receipt
        .valid_line
        .iter()
        .filter(|l| l.words.iter().any(|w| !w.text.trim().is_empty()))
        .map(|l| {
            let boxes: Vec<PixelBox> = l.words.iter().map(|w| quad_box(&w.quad)).collect();
            let y0 = boxes.iter().map(|b| b.y0).fold(f64::INFINITY, f64::min);
            let x0 = boxes.iter().map(|b| b.x0).fold(f64::INFINITY, f64::min);
            (
                PixelBox {
                    x0,
                    y0,
                    x1: x0,
                    y1: y0,
                },
                l,
            )
        })
        .collect();
    lines.sort_by(|a, b| (a.0.y0, a.0.x0).partial_cmp(&(b.0.y0, b.0.x0)).unwrap_or(std::cmp::Ordering::Equal));

    let mut tokens = Vec::new();
    let mut spans: Vec<(String, Span)> = Vec::new();
    for (line_id, (_, line)) in lines.iter().enumerate() {
        let first = tokens.len() + 1;
        for w in line.words.iter().filter(|w| !w.text.trim().is_empty()) {
            tokens.push(Token {
                text: w.text.trim().to_string(),
                bbox: normalize_box(quad_box(&w.quad), width, height)?,
                line_id: line_id as u32,
            });
        }
        spans.push((format!("{CORD_DATASET_ID}/{}", line.category), Span::new(first, tokens.len())));
    }

    let mut annotations: Vec<EntityAnnotation> = Vec::new();
    for (field, span) in spans {
        match annotations.iter_mut().find(|a| a.field_id == field) {
            Some(a) => a.spans.push(span),
            None => annotations.push(EntityAnnotation {
                field_id: field,
                spans: vec![span],
            }),
        }
    }
    let doc = Document::new(doc_id, width.round() as u32, height.round() as u32, tokens, annotations)?;
    Ok(doc.with_chain_order())
}

fn quad_box(q: &Quad) -> PixelBox {
    PixelBox::from_quad([(q.x1, q.y1), (q.x2, q.y2), (q.x3, q.y3), (q.x4, q.y4)])
}

/// Loads one CORD split from `root/<split>/json/*.json` (or
/// `root/<split>/*.json`), in filename order. Unreadable files are reported
/// in [`CordLoad::errors`] and skipped.
pub fn load_cord(root: &Path, split: Split, options: &CordOptions) -> Result<CordLoad> {
    let dir = split_dir(root, split);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut documents = Vec::with_capacity(files.len());
    let mut errors = Vec::new();
    for path in files {
        let doc_id = format!(
            "{CORD_DATASET_ID}-{split}-{}",
            path.file_stem().unwrap_or_default().to_string_lossy()
        );
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_receipt(doc_id, &text, options).map_err(|e| e.to_string()));
        match parsed {
            Ok(d) => documents.push(d),
            Err(msg) => {
                log::error!("{}: {msg}", path.display());
                errors.push((path, msg));
            }
        }
    }
    if documents.len() != expected_size(split) {
        log::warn!(
            "CORD {split}: loaded {} receipts, expected {}",
            documents.len(),
            expected_size(split)
        );
    }

    let mut fields: Vec<String> = CORD_CATEGORIES.iter().map(|c| format!("{CORD_DATASET_ID}/{c}")).collect();
    let known: BTreeSet<String> = fields.iter().cloned().collect();
    let extra: BTreeSet<String> = documents
        .iter()
        .flat_map(|d| d.annotations.iter().map(|a| a.field_id.clone()))
        .filter(|f| !known.contains(f))
        .collect();
    if !extra.is_empty() {
        log::warn!("CORD {split}: categories outside the standard set: {extra:?}");
    }
    fields.extend(extra);
    let schema = FieldSchema::new(CORD_DATASET_ID, fields)?;
    let dataset = Dataset::new(schema, documents, split)?;
    Ok(CordLoad { dataset, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(text: &str, x: f64, y: f64) -> serde_json::Value {
        serde_json::json!({
            "quad": {"x1": x, "y1": y, "x2": x + 40.0, "y2": y, "x3": x + 42.0, "y3": y + 20.0, "x4": x - 1.0, "y4": y + 20.0},
            "text": text
        })
    }

    fn receipt(lines: serde_json::Value) -> String {
        serde_json::json!({"valid_line": lines, "meta": {"image_size": {"width": 500, "height": 1000}}}).to_string()
    }

    #[test]
    fn parses_lines_and_chains() {
        let text = receipt(serde_json::json!([
            {"category": "menu.nm", "group_id": 3, "words": [word("Tea", 10.0, 300.0), word("Ice", 60.0, 300.0)]},
            {"category": "menu.nm", "group_id": 1, "words": [word("Rice", 10.0, 100.0)]},
            {"category": "total.total_price", "group_id": 9, "words": [word("9.00", 300.0, 600.0)]}
        ]));
        let doc = parse_receipt("r".into(), &text, &CordOptions::default()).unwrap();
        let texts: Vec<&str> = doc.real_tokens().iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["Rice", "Tea", "Ice", "9.00"]);
        assert_eq!(doc.gold_spans("cord/menu.nm"), &[Span::new(1, 1), Span::new(2, 3)]);
        // quad x1=10, x4=9, x3=52 on a 500px page
        let b = doc.tokens()[2].bbox;
        assert_eq!((b.x0, b.x1), (18, 104));
    }

    #[test]
    fn empty_receipt_has_only_null() {
        let doc = parse_receipt("r".into(), &receipt(serde_json::json!([])), &CordOptions::default()).unwrap();
        assert_eq!(doc.seq_len(), 1);
        assert!(doc.annotations.is_empty());
    }

    #[test]
    fn page_size_override_and_missing_meta() {
        let text = serde_json::json!({"valid_line": []}).to_string();
        assert!(parse_receipt("r".into(), &text, &CordOptions::default()).is_err());
        let opts = CordOptions {
            page_size: Some((100, 100)),
        };
        assert!(parse_receipt("r".into(), &text, &opts).is_ok());
    }

    #[test]
    fn loader_skips_garbled_files() {
        let dir = tempfile::tempdir().unwrap();
        let split = dir.path().join("dev").join("json");
        fs::create_dir_all(&split).unwrap();
        fs::write(split.join("receipt_00001.json"), receipt(serde_json::json!([]))).unwrap();
        fs::write(split.join("receipt_00000.json"), "{not json").unwrap();
        let load = load_cord(dir.path(), Split::Dev, &CordOptions::default()).unwrap();
        assert_eq!(load.dataset.len(), 1);
        assert_eq!(load.errors.len(), 1);
        assert_eq!(load.dataset.schema.len(), 30);
    }
}
