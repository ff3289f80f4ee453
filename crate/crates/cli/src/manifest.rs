use std::path::Path;

use serde::{Deserialize, Serialize};

use aad_core::Result;

/// Provenance record written into every command's output directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub input_paths: Vec<String>,
    pub output_paths: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub threads: usize,
    pub deterministic: bool,
    /// Free-form flags worth surfacing, e.g. a non-reference embedding width.
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| aad_core::Error::Format(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// SHA-256 hex digest of a byte string, used to fingerprint configs.
pub fn digest_bytes(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}
