use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::output;

/// Provenance record written next to every command's outputs, before them.
/// Contains no timestamps so reruns produce identical bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Every effective flag value, defaults included.
    pub args: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Input path as given → `sha256:<hex>` of its contents.
    pub input_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            args: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: BTreeMap::new(),
        }
    }

    pub fn arg(&mut self, name: &str, value: impl Into<Value>) -> &mut Self {
        self.args.insert(name.to_string(), value.into());
        self
    }

    pub fn input(&mut self, path: &Path, contents: &[u8]) -> &mut Self {
        self.input_digests
            .insert(path.display().to_string(), digest(contents));
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        output::write(path, &text)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}
