use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

/// Hex SHA-256 digest identifying one (model, temperature, prompt) request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(model_name: &str, temperature: f64, prompt_text: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"model\0");
        h.update(model_name.as_bytes());
        h.update(b"\0temperature\0");
        h.update(temperature.to_bits().to_be_bytes());
        h.update(b"\0prompt\0");
        h.update(prompt_text.as_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Completions on disk, one `<digest>.txt` file per key.
///
/// Writes go through a temporary file and a rename, so concurrent writers
/// of the same key leave one complete value behind.
#[derive(Debug, Clone)]
pub struct CompletionCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CompletionCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CompletionCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.txt", key.as_str()))
    }

    pub fn get(&self, key: &CacheKey) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path(key)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &CacheKey, text: &str) -> io::Result<()> {
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{}.{}.{}.tmp", key.as_str(), std::process::id(), n));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.path(key))
    }

    pub fn len(&self) -> io::Result<usize> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if name.to_string_lossy().ends_with(".txt") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }
}
