//! Flat parameter archive.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"DSPNARC1"                 8-byte magic
//! u64                         manifest length in bytes
//! manifest                    UTF-8 JSON, see `Manifest`
//! f64 * Σ numel               raw values, tensors in manifest order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DSPNARC1";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tensors: Vec<ManifestEntry>,
    /// Free-form metadata stored alongside the tensors.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn encode_archive(store: &ParamStore, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format_version: ARCHIVE_VERSION,
        tensors: store
            .iter()
            .map(|(_, name, t)| ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_archive(bytes: &[u8]) -> Result<(ParamStore, Manifest)> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a parameter archive"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = bytes
        .get(16..16 + header_len)
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if manifest.format_version != ARCHIVE_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported archive version {}",
            manifest.format_version
        )));
    }
    let mut offset = 16 + header_len;
    let mut store = ParamStore::new();
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let raw = bytes
            .get(offset..offset + numel * 8)
            .ok_or_else(|| Error::Checkpoint(format!("truncated data for `{}`", entry.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
        offset += numel * 8;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after archive data"));
    }
    Ok((store, manifest))
}

pub fn save_archive(path: &Path, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    let bytes = encode_archive(store, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_archive(path: &Path) -> Result<(ParamStore, Manifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes)
}
