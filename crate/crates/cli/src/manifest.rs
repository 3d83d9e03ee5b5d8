//! Run manifest: which arms are done, where their results live and what
//! their bytes hash to.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmStatus {
    Pending,
    Trained,
    Evaluated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmEntry {
    pub status: ArmStatus,
    /// Result file, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArmEntry {
    pub fn pending() -> Self {
        Self {
            status: ArmStatus::Pending,
            path: None,
            sha256: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub toolkit_version: String,
    /// Keyed by `arm/seed-N`.
    pub arms: BTreeMap<String, ArmEntry>,
}

pub fn arm_key(arm: &str, seed: u64) -> String {
    format!("{arm}/seed-{seed}")
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            arms: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> io::Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, dir: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Whether `key` finished and its result file still matches its hash.
    pub fn is_complete(&self, dir: &Path, key: &str) -> bool {
        let Some(entry) = self.arms.get(key) else {
            return false;
        };
        match (&entry.status, &entry.path, &entry.sha256) {
            (ArmStatus::Evaluated, Some(path), Some(hash)) => {
                sha256_file(&dir.join(path)).is_ok_and(|h| &h == hash)
            }
            _ => false,
        }
    }

    pub fn set(&mut self, key: &str, entry: ArmEntry) {
        self.arms.insert(key.to_string(), entry);
    }

    pub fn failed(&self) -> Vec<String> {
        self.arms
            .iter()
            .filter(|(_, e)| e.status == ArmStatus::Failed)
            .map(|(k, _)| k.clone())
            .collect()
    }
}
