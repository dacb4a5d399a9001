use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ChatRequest;

/// On-disk cache entry, one JSON file per request fingerprint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: ChatRequest,
    pub response_text: String,
    pub timestamp: String,
}

/// Content-addressed response cache laid out as
/// `<root>/<fingerprint[..2]>/<fingerprint>.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, fingerprint: &str) -> PathBuf {
        let prefix = &fingerprint[..fingerprint.len().min(2)];
        self.root.join(prefix).join(format!("{fingerprint}.json"))
    }

    pub fn get(&self, fingerprint: &str) -> io::Result<Option<String>> {
        let path = self.entry_path(fingerprint);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) => Ok(Some(entry.response_text)),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    /// Writes to a temporary file in the target directory, then renames it
    /// into place.
    pub fn put(&self, fingerprint: &str, request: &ChatRequest, text: &str) -> io::Result<()> {
        let path = self.entry_path(fingerprint);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            request: request.clone(),
            response_text: text.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
