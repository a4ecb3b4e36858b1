use std::path::{Path, PathBuf};
use std::time::Instant;

use heatlab_core::io;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: Vec<String>,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub versions: Versions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub heatlab_cli: String,
    pub heatlab_core: String,
}

pub fn config_hash(config: &Value) -> String {
    // serde_json maps keep keys sorted, so this is canonical.
    let text = serde_json::to_string(config).unwrap_or_default();
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Recorder {
    command: Vec<String>,
    started: Instant,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            started: Instant::now(),
            config: Value::Null,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, config: Value) {
        self.config = config;
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `manifest.json` into `dir`, replacing any earlier one.
    pub fn finish(self, dir: &Path) -> heatlab_core::Result<()> {
        io::ensure_dir(dir)?;
        let manifest = RunManifest {
            format_version: 1,
            command: self.command,
            config_hash: config_hash(&self.config),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            versions: Versions {
                heatlab_cli: env!("CARGO_PKG_VERSION").to_string(),
                heatlab_core: heatlab_core::VERSION.to_string(),
            },
        };
        io::write_json(&dir.join(MANIFEST_FILE), &manifest)
    }
}

/// Directory that receives the manifest for an output path: the path itself
/// when it is a directory output, otherwise its parent.
pub fn manifest_dir(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.to_path_buf()
    } else {
        match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }
}
