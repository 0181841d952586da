//! Content-addressed JSON file cache for fetched artifacts.
//!
//! Layout is one directory per artifact kind with one file per key:
//! `<cache_dir>/<kind>/<identifier>.json`. Writes are create-only per key
//! and go through a temp file + rename, so concurrent readers never see a
//! partial file and concurrent writers of the same key settle on one copy.

use std::path::{Path, PathBuf};

use super::IngestError;

/// What kind of artifact a cache entry holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    Trace,
    Receipt,
    Abi,
    StorageLayout,
}

impl CacheKind {
    fn dir_name(self) -> &'static str {
        match self {
            CacheKind::Trace => "trace",
            CacheKind::Receipt => "receipt",
            CacheKind::Abi => "abi",
            CacheKind::StorageLayout => "layout",
        }
    }
}

/// (kind, identifier) uniquely addresses one cached artifact; the
/// identifier is a tx hash or contract address in hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub kind: CacheKind,
    pub identifier: String,
}

impl CacheKey {
    pub fn new(kind: CacheKind, identifier: impl Into<String>) -> Self {
        let identifier: String = identifier.into();
        CacheKey {
            kind,
            // Identifiers are hex strings; strip anything path-hostile.
            identifier: identifier
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect(),
        }
    }
}

/// A directory-backed cache. Cheap to clone paths around; all methods take
/// `&self` and are safe under concurrent readers.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    /// Cache rooted at the env override or the given default.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var(super::CACHE_DIR_ENV) {
            Ok(dir) if !dir.is_empty() => Cache::new(dir),
            _ => Cache::new(default),
        }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root
            .join(key.kind.dir_name())
            .join(format!("{}.json", key.identifier))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).is_file()
    }

    /// Read the cached bytes for a key, if present.
    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<u8>>, IngestError> {
        let path = self.path_for(key);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    /// Store bytes under a key. Create-only: an existing entry is left
    /// untouched and its bytes returned, so a fetch never mutates a cached
    /// artifact.
    pub fn put(&self, key: &CacheKey, bytes: &[u8]) -> Result<Vec<u8>, IngestError> {
        let path = self.path_for(key);
        if let Some(existing) = self.get(key)? {
            return Ok(existing);
        }
        let dir = path.parent().expect("cache paths have parents");
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let tmp = dir.join(format!(
            ".{}.{}.tmp",
            key.identifier,
            std::process::id()
        ));
        std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
        match std::fs::rename(&tmp, &path) {
            Ok(()) => Ok(bytes.to_vec()),
            Err(e) => {
                // Lost a race with another writer: keep theirs.
                let _ = std::fs::remove_file(&tmp);
                if path.is_file() {
                    Ok(self.get(key)?.unwrap_or_else(|| bytes.to_vec()))
                } else {
                    Err(io_err(&path, e))
                }
            }
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source: e,
    }
}
