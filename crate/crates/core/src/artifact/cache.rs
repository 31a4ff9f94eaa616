//! Content-addressed on-disk cache shared by the compiler driver and the explorer client.

use super::types::{io_err, ArtifactError};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct Cache {
    root: PathBuf,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Exclusive per-key writer lock backed by a lock file; released on drop.
pub struct KeyLock {
    path: PathBuf,
}

impl Drop for KeyLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Cache {
        Cache { root: root.into() }
    }

    /// `$EQUIVGUARD_CACHE`, else `~/.cache/equivguard`.
    pub fn default_location() -> Cache {
        if let Some(p) = std::env::var_os("EQUIVGUARD_CACHE") {
            return Cache::new(p);
        }
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
        Cache::new(home.join(".cache").join("equivguard"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn read(&self, rel: &str) -> Option<Vec<u8>> {
        fs::read(self.path(rel)).ok()
    }

    /// Writes via a temp file and rename so readers never observe partial content.
    pub fn write_atomic(&self, rel: &str, data: &[u8]) -> Result<(), ArtifactError> {
        let dest = self.path(rel);
        let dir = dest.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(data).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &dest).map_err(io_err(&dest))
    }

    /// Stores `data` under its sha256 and returns the digest.
    pub fn put_object(&self, data: &[u8]) -> Result<String, ArtifactError> {
        let digest = sha256_hex(data);
        let rel = format!("objects/{digest}");
        if !self.path(&rel).exists() {
            self.write_atomic(&rel, data)?;
        }
        Ok(digest)
    }

    pub fn get_object(&self, digest: &str) -> Option<Vec<u8>> {
        let data = self.read(&format!("objects/{digest}"))?;
        (sha256_hex(&data) == digest).then_some(data)
    }

    pub fn lock(&self, key: &str) -> Result<KeyLock, ArtifactError> {
        let path = self.path(&format!("locks/{}.lock", sha256_hex(key.as_bytes())));
        let dir = path.parent().unwrap().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(KeyLock { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if Instant::now() > deadline {
                        // stale lock from a crashed writer
                        let _ = fs::remove_file(&path);
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
    }

    pub fn list(&self, rel_dir: &str) -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(self.path(rel_dir))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| !n.starts_with('.'))
            .collect();
        v.sort();
        v
    }
}
