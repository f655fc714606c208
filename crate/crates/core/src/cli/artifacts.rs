//! Artifact writing: provenance headers and atomic file replacement.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;

pub const TOOL_NAME: &str = "ristool";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical (compact) serialization of the resolved config.
/// The output directory is blanked first so that where artifacts land does
/// not change what they contain.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.output_dir = Default::default();
    let canonical = serde_json::to_string(&cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Writes artifacts into one output directory, all stamped with the same
/// provenance line.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, cfg: &ScenarioConfig) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: config_hash(cfg),
            written: Vec::new(),
        })
    }

    pub fn config_sha256(&self) -> &str {
        &self.hash
    }

    /// `# ristool <version> config_sha256=<hex>`
    pub fn header_line(&self) -> String {
        format!("# {TOOL_NAME} {TOOL_VERSION} config_sha256={}", self.hash)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Text artifact whose first line is the provenance comment.
    pub fn write_text(&mut self, name: &str, body: &str) -> std::io::Result<PathBuf> {
        let mut text = self.header_line();
        text.push('\n');
        text.push_str(body);
        self.write_raw(name, text.as_bytes())
    }

    /// JSON artifact with a leading `_meta` object.
    pub fn write_json(&mut self, name: &str, body: Value) -> std::io::Result<PathBuf> {
        let mut out = Map::new();
        out.insert(
            "_meta".into(),
            serde_json::json!({
                "tool": TOOL_NAME,
                "version": TOOL_VERSION,
                "config_sha256": self.hash,
            }),
        );
        match body {
            Value::Object(m) => out.extend(m),
            other => {
                out.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(out)).expect("json serializes");
        text.push('\n');
        self.write_raw(name, text.as_bytes())
    }

    fn write_raw(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        self.written.push(path.clone());
        Ok(path)
    }
}
