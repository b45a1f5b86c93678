use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::GenerationResult;
use crate::digest::sha256_hex;

/// Content-addressed response cache: one JSON file per request key, named by
/// the key's SHA-256. Reads are lock-free; writes go through a temp file and
/// rename under a process-wide mutex.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request_key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", sha256_hex(request_key)))
    }

    /// A stored result, if present and recorded under exactly this key.
    pub fn get(&self, request_key: &str) -> io::Result<Option<GenerationResult>> {
        let path = self.path_for(request_key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        match serde_json::from_slice::<GenerationResult>(&bytes) {
            Ok(r) if r.request_key == request_key => Ok(Some(r)),
            Ok(_) => Ok(None),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn put(&self, result: &GenerationResult) -> io::Result<()> {
        let path = self.path_for(&result.request_key);
        let body = serde_json::to_vec_pretty(result).map_err(io::Error::other)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body)?;
        fs::rename(tmp, path)
    }

    pub fn len(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }
}
