//! Content-hash manifest over an experiment's artifact directory.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "phyadv-manifest/1";

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub schema: String,
    /// File name → SHA-256 hex digest, sorted by name.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash every regular file in the directory (excluding the manifest itself)
/// and write `manifest.json`. Re-running an experiment with the same config
/// and seeds must reproduce this manifest exactly.
pub fn write_manifest(dir: &Path) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !entry.file_type()?.is_file() {
            continue;
        }
        let bytes = std::fs::read(entry.path())?;
        files.insert(name, sha256_hex(&bytes));
    }
    let manifest = Manifest { schema: MANIFEST_SCHEMA.to_string(), files };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let raw = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&raw).map_err(|e| Error::Format(format!("malformed manifest: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_deterministic_and_excludes_itself() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), "x,y\n1,2\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "p\n3\n").unwrap();
        let first = write_manifest(dir.path()).unwrap();
        let second = write_manifest(dir.path()).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.files.len(), 2);
        assert!(!first.files.contains_key(MANIFEST_FILE));
        assert_eq!(read_manifest(dir.path()).unwrap(), first);
    }

    #[test]
    fn content_change_changes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "1").unwrap();
        let first = write_manifest(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), "2").unwrap();
        let second = write_manifest(dir.path()).unwrap();
        assert_ne!(first, second);
    }
}
