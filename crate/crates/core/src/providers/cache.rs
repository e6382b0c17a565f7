use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 of the canonical JSON serialization of a provider request,
/// prefixed by the capability name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn of<T: Serialize + ?Sized>(kind: &str, request: &T) -> Result<Self> {
        let body = serde_json::to_vec(request)?;
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0u8]);
        h.update(&body);
        Ok(CacheKey(h.finalize().into()))
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry<Req, Resp> {
    digest: String,
    request: Req,
    response: Resp,
    timestamp: u64,
}

/// One JSON file per digest, sharded by the first digest byte. Writes go
/// through a temp file in the same directory and are renamed into place.
#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating cache dir {}", dir.display()), e))?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.hex();
        self.dir.join(&hex[..2]).join(format!("{hex}.json"))
    }

    pub fn get<Resp: DeserializeOwned>(&self, key: &CacheKey) -> Result<Option<Resp>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(format!("reading cache entry {}", path.display()), e)),
        };
        match serde_json::from_slice::<Entry<serde_json::Value, Resp>>(&bytes) {
            Ok(entry) => Ok(Some(entry.response)),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn put<Req: Serialize + ?Sized, Resp: Serialize + ?Sized>(&self, key: &CacheKey, request: &Req, response: &Resp) -> Result<()> {
        let path = self.path_for(key);
        let shard = path.parent().expect("cache entries live in a shard directory");
        fs::create_dir_all(shard).map_err(|e| Error::io(format!("creating {}", shard.display()), e))?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = Entry {
            digest: key.hex(),
            request,
            response,
            timestamp,
        };
        let body = serde_json::to_vec(&entry)?;
        let mut tmp = tempfile::NamedTempFile::new_in(shard).map_err(|e| Error::io("creating cache temp file", e))?;
        tmp.write_all(&body).map_err(|e| Error::io("writing cache temp file", e))?;
        tmp.persist(&path)
            .map_err(|e| Error::io(format!("renaming cache entry into {}", path.display()), e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_requests_equal_digests() {
        let a = CacheKey::of("llm", &("m", "p", 0.0)).unwrap();
        let b = CacheKey::of("llm", &("m", "p", 0.0)).unwrap();
        let c = CacheKey::of("llm", &("m", "q", 0.0)).unwrap();
        let d = CacheKey::of("embed", &("m", "p", 0.0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.hex().len(), 64);
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = CacheKey::of("t", "req").unwrap();
        assert_eq!(cache.get::<f64>(&key).unwrap(), None);
        cache.put(&key, "req", &1.5f64).unwrap();
        assert_eq!(cache.get::<f64>(&key).unwrap(), Some(1.5));
        // no temp files left behind
        let shard = dir.path().join(&key.hex()[..2]);
        assert_eq!(fs::read_dir(shard).unwrap().count(), 1);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = CacheKey::of("t", "req").unwrap();
        cache.put(&key, "req", &1.5f64).unwrap();
        fs::write(cache.path_for(&key), b"{not json").unwrap();
        assert_eq!(cache.get::<f64>(&key).unwrap(), None);
    }
}
