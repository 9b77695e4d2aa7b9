//! Directory-backed artifact store with S3-like relative keys.
//!
//! Keys are `/`-separated relative paths. Regular artifacts are write-once;
//! run metadata (manifest, throughput log) goes through [`ArtifactStore::overwrite`].

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::{Error, Result};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn full_path(&self, key: &str) -> Result<PathBuf> {
        let rel = Path::new(key);
        if key.is_empty()
            || rel
                .components()
                .any(|c| !matches!(c, Component::Normal(_)))
        {
            return Err(Error::Domain(format!("invalid artifact key `{key}`")));
        }
        Ok(self.root.join(rel))
    }

    pub fn exists(&self, key: &str) -> bool {
        self.full_path(key).map(|p| p.is_file()).unwrap_or(false)
    }

    /// Write-once store. Fails with [`Error::AlreadyExists`] if the key is taken.
    pub fn store(&self, key: &str, bytes: &[u8]) -> Result<()> {
        let path = self.full_path(key)?;
        let tmp = self.write_temp(&path, bytes)?;
        // hard_link refuses to replace an existing file, so concurrent writers
        // cannot both succeed
        let linked = fs::hard_link(&tmp, &path);
        let _ = fs::remove_file(&tmp);
        match linked {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::AlreadyExists(key.to_string()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Stores `bytes` unless the key already holds exactly these bytes.
    pub fn store_idempotent(&self, key: &str, bytes: &[u8]) -> Result<()> {
        match self.store(key, bytes) {
            Err(Error::AlreadyExists(k)) => {
                if self.fetch(key)? == bytes {
                    Ok(())
                } else {
                    Err(Error::AlreadyExists(k))
                }
            }
            other => other,
        }
    }

    /// Atomically replaces a mutable metadata artifact.
    pub fn overwrite(&self, key: &str, bytes: &[u8]) -> Result<()> {
        let path = self.full_path(key)?;
        let tmp = self.write_temp(&path, bytes)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn fetch(&self, key: &str) -> Result<Vec<u8>> {
        let path = self.full_path(key)?;
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::NotFound(key.to_string()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn fetch_string(&self, key: &str) -> Result<String> {
        String::from_utf8(self.fetch(key)?).map_err(|e| Error::parse(key, e))
    }

    /// Keys directly or transitively under `prefix`, sorted.
    pub fn list(&self, prefix: &str) -> Result<Vec<String>> {
        let dir = self.full_path(prefix)?;
        let mut out = Vec::new();
        if dir.is_dir() {
            walk(&self.root, &dir, &mut out)?;
        }
        out.sort();
        Ok(out)
    }

    fn write_temp(&self, path: &Path, bytes: &[u8]) -> Result<PathBuf> {
        let dir = path.parent().expect("artifact path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        Ok(tmp)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            walk(root, &p, out)?;
        } else if !entry.file_name().to_string_lossy().starts_with(".tmp-") {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
            );
        }
    }
    Ok(())
}
