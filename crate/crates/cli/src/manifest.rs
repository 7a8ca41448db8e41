//! Run manifests: enough to reproduce a command (arguments, effective
//! configuration, seed, code version).

use std::path::Path;

use serde_json::{json, Value};

use crate::Failure;

pub const VERSION: &str = concat!("docspan ", env!("CARGO_PKG_VERSION"));

pub fn write(out: &Path, command: &str, seed: Option<u64>, config: Value, outputs: &[&str]) -> Result<(), Failure> {
    let manifest = json!({
        "command": command,
        "version": VERSION,
        "argv": std::env::args().collect::<Vec<_>>(),
        "seed": seed,
        "config": config,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    crate::commands::write_file(&out.join("manifest.json"), &text)
}
