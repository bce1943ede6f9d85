//! Per-command run manifests: configuration digest, seed and the SHA-256 of
//! every input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub seed: u64,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct ManifestWriter {
    path: PathBuf,
    root: PathBuf,
    manifest: Manifest,
}

impl ManifestWriter {
    /// Writes the manifest with status `started` before any work is done.
    pub fn start(
        root: &Path,
        command: &str,
        seed: u64,
        config_digest: String,
        config: serde_json::Value,
        inputs: &[PathBuf],
    ) -> Result<Self> {
        let mut w = ManifestWriter {
            path: root.join(format!("manifest-{command}.json")),
            root: root.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                status: "started".into(),
                seed,
                config_digest,
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        };
        for p in inputs.iter().filter(|p| p.is_file()) {
            let key = w.key(p);
            w.manifest.inputs.insert(key, sha256_file(p)?);
        }
        w.save()?;
        Ok(w)
    }

    fn key(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn save(&self) -> Result<()> {
        let mut s = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Internal(e.to_string()))?;
        s.push('\n');
        fs::write(&self.path, s).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self, outputs: &[PathBuf]) -> Result<Manifest> {
        for p in outputs {
            let key = self.key(p);
            self.manifest.outputs.insert(key, sha256_file(p)?);
        }
        self.manifest.status = "ok".into();
        self.save()?;
        Ok(self.manifest)
    }

    pub fn fail(mut self, error: &Error) {
        self.manifest.status = format!("failed: {error}");
        let _ = self.save();
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}
