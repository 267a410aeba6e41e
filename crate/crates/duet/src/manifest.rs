//! Run-directory bookkeeping: a manifest listing every artifact's SHA-256,
//! rewritten in sorted order after each command so identical runs produce
//! byte-identical manifests, and an exclusive lock file enforcing one
//! writer per output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";
const LOCK_NAME: &str = ".duet.lock";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("output directory {0} is locked by another writer (remove {LOCK_NAME} if stale)")]
    Locked(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
}

pub fn hash_file(path: &Path) -> Result<String, ManifestError> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buffer)?;
        if n == 0 {
            break;
        }
        hasher.update(&buffer[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn load_manifest(out_dir: &Path) -> Result<Manifest, ManifestError> {
    let path = out_dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(Manifest::default());
    }
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// Re-hashes the named artifacts (paths relative to the out dir) and
/// rewrites the manifest.
pub fn record_artifacts(out_dir: &Path, names: &[&str]) -> Result<Manifest, ManifestError> {
    let mut manifest = load_manifest(out_dir)?;
    for name in names {
        let digest = hash_file(&out_dir.join(name))?;
        manifest.artifacts.insert((*name).to_string(), digest);
    }
    let mut file = File::create(out_dir.join(MANIFEST_NAME))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Held for the duration of a command; created exclusively, removed on
/// drop.
pub struct OutDirLock {
    path: PathBuf,
}

impl OutDirLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, ManifestError> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(LOCK_NAME);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutDirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(ManifestError::Locked(out_dir.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_sorted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "bb").unwrap();
        std::fs::write(dir.path().join("a.txt"), "aa").unwrap();
        record_artifacts(dir.path(), &["b.txt"]).unwrap();
        record_artifacts(dir.path(), &["a.txt"]).unwrap();
        let first = std::fs::read(dir.path().join(MANIFEST_NAME)).unwrap();
        // rewriting with the same content is byte-identical
        record_artifacts(dir.path(), &["a.txt", "b.txt"]).unwrap();
        let second = std::fs::read(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(first, second);
        let manifest = load_manifest(dir.path()).unwrap();
        let keys: Vec<&String> = manifest.artifacts.keys().collect();
        assert_eq!(keys, ["a.txt", "b.txt"]);
    }

    #[test]
    fn lock_excludes_second_writer() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutDirLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            OutDirLock::acquire(dir.path()),
            Err(ManifestError::Locked(_))
        ));
        drop(lock);
        OutDirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn hash_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            hash_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
