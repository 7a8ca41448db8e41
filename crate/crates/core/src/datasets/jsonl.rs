//! JSON-lines persistence.
//!
//! Line 1 is a header object:
//!
//! ```json
//! {"docspan_jsonl":1,"dataset_id":"syn","split":"train","fields":["syn/total"]}
//! ```
//!
//! Every following line is one document:
//!
//! ```json
//! {"doc_id":"…","page_width":800,"page_height":1000,
//!  "tokens":[{"text":"Total:","box":[10,20,90,40],"line_id":3}],
//!  "annotations":[{"field_id":"syn/total","spans":[[2,2]]}]}
//! ```
//!
//! `tokens` lists real tokens only; span indices are inclusive and 1-based,
//! position 0 being the implicit null token.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::doc_model::{Document, EntityAnnotation, FieldSchema, Token};
use crate::error::{Error, Result};

pub const JSONL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    docspan_jsonl: u32,
    dataset_id: String,
    split: Split,
    fields: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    doc_id: String,
    page_width: u32,
    page_height: u32,
    tokens: Vec<Token>,
    annotations: Vec<EntityAnnotation>,
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    let header = Header {
        docspan_jsonl: JSONL_VERSION,
        dataset_id: dataset.dataset_id.clone(),
        split: dataset.split,
        fields: dataset.schema.field_ids.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for d in &dataset.documents {
        let rec = DocRecord {
            doc_id: d.doc_id.clone(),
            page_width: d.page_width,
            page_height: d.page_height,
            tokens: d.real_tokens().to_vec(),
            annotations: d.annotations.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(dataset, &mut buf).map_err(|e| Error::io(path, e))?;
    Error::write_file(path, &buf)
}

/// Parses a dataset; `origin` names the source in error messages.
pub fn read_jsonl<R: Read>(input: R, origin: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(input).lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(origin, e))?;
            serde_json::from_str(&line).map_err(|e| parse_err(1, format!("bad header: {e}")))?
        }
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.docspan_jsonl != JSONL_VERSION {
        return Err(parse_err(
            1,
            format!(
                "schema version {} not supported (expected {JSONL_VERSION})",
                header.docspan_jsonl
            ),
        ));
    }
    let schema = FieldSchema::new(header.dataset_id, header.fields).map_err(|e| parse_err(1, e.to_string()))?;
    let mut documents = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let doc = Document::new(rec.doc_id, rec.page_width, rec.page_height, rec.tokens, rec.annotations)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        documents.push(doc);
    }
    Dataset::new(schema, documents, header.split)
}

pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(f, path)
}
