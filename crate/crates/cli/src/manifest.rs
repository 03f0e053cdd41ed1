//! Reproducibility record written next to every set of outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// SHA-256 of the resolved configuration, also saved as `config.toml`.
    pub config_sha256: String,
    pub master_seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(config_toml: &str, master_seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: std::env::args().collect(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            master_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now_unix(),
            finished_unix: f64::NAN,
        }
    }

    /// Records checksums of `files` (relative to `dir`) and writes the manifest there.
    pub fn finish(mut self, dir: &Path, files: &[String]) -> Result<Self, CliError> {
        for f in files {
            let d = digest_file(&dir.join(f))?;
            self.outputs.push(FileDigest { path: PathBuf::from(f), sha256: d.sha256 });
        }
        self.finished_unix = now_unix();
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
