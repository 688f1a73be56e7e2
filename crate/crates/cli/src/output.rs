use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::args::Format;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record written at the top of every output.
#[derive(Debug, Clone)]
pub struct Metadata {
    pub command: &'static str,
    /// `None` for commands that draw no random numbers.
    pub seed: Option<u64>,
    pub config_hash: String,
    pub elapsed: Option<Duration>,
}

impl Metadata {
    /// `config` must hold every setting that shapes the output except the
    /// seed, worker count, output paths and timing.
    pub fn new(command: &'static str, seed: Option<u64>, config: &Value) -> Self {
        Self { command, seed, config_hash: config_hash(command, config), elapsed: None }
    }

    fn seed_text(&self) -> String {
        self.seed.map_or("-".into(), |s| s.to_string())
    }

    pub fn csv_line(&self) -> String {
        let mut line = format!(
            "# rankset {VERSION} command={} seed={} config={}",
            self.command,
            self.seed_text(),
            self.config_hash
        );
        if let Some(t) = self.elapsed {
            line.push_str(&format!(" elapsed_s={:.3}", t.as_secs_f64()));
        }
        line
    }

    pub fn json(&self) -> Value {
        let mut v = json!({
            "tool": "rankset",
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
        });
        if let Some(t) = self.elapsed {
            v["elapsed_s"] = json!((t.as_secs_f64() * 1000.0).round() / 1000.0);
        }
        v
    }
}

fn config_hash(command: &str, config: &Value) -> String {
    // serde_json maps are ordered by key, so this text is canonical
    let text = json!({ "command": command, "config": config }).to_string();
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Writes a metadata-prefixed document to `path`, or stdout when `None`.
pub fn emit(path: Option<&Path>, body: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut w = BufWriter::new(file);
            w.write_all(body)?;
            w.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// CSV body from a writer callback, prefixed by the metadata line.
pub fn csv_document(meta: &Metadata, write: impl FnOnce(&mut Vec<u8>) -> rankset::Result<()>) -> Result<Vec<u8>> {
    let mut buf = meta.csv_line().into_bytes();
    buf.push(b'\n');
    write(&mut buf)?;
    Ok(buf)
}

pub fn json_document<T: Serialize>(meta: &Metadata, result: &T) -> Result<Vec<u8>> {
    let doc = json!({ "metadata": meta.json(), "result": result });
    let mut buf = serde_json::to_vec_pretty(&doc)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn document<T: Serialize>(
    format: Format,
    meta: &Metadata,
    result: &T,
    write_csv: impl FnOnce(&mut Vec<u8>) -> rankset::Result<()>,
) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_document(meta, write_csv),
        Format::Json => json_document(meta, result),
    }
}

/// Hex SHA-256 of a file's bytes, used to tie outputs to their inputs.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
