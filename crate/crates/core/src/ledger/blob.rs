//! Off-chain image storage. Only the `(hash, id)` anchor goes on chain; the
//! bytes live here, one file per image id.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::tx::Digest;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("refusing to anchor an empty image")]
    Empty,
    #[error("blob store i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("image {0} is missing from the blob store")]
    Missing(String),
    #[error("image {image_id} does not match its anchor: expected {expected}, found {actual}")]
    Mismatch {
        image_id: String,
        expected: Digest,
        actual: Digest,
    },
    #[error("reading image {image_id}: {reason}")]
    Unreadable { image_id: String, reason: String },
}

#[derive(Debug)]
enum Backend {
    Dir(PathBuf),
    Memory(BTreeMap<String, Vec<u8>>),
}

#[derive(Debug)]
pub struct BlobStore {
    backend: Backend,
    next_id: u64,
}

impl BlobStore {
    /// Opens (creating if needed) a directory-backed store. Fresh ids continue
    /// after the files already present.
    pub fn open_dir(dir: impl AsRef<Path>) -> Result<Self, BlobError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| BlobError::Io {
            path: dir.clone(),
            source,
        })?;
        let existing = fs::read_dir(&dir)
            .map_err(|source| BlobError::Io {
                path: dir.clone(),
                source,
            })?
            .count() as u64;
        Ok(Self {
            backend: Backend::Dir(dir),
            next_id: existing,
        })
    }

    pub fn in_memory() -> Self {
        Self {
            backend: Backend::Memory(BTreeMap::new()),
            next_id: 0,
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Dir(p) => Some(p),
            Backend::Memory(_) => None,
        }
    }

    /// Persists `bytes` under a fresh id and returns `(digest, id)`.
    pub fn anchor_image(&mut self, bytes: &[u8]) -> Result<(Digest, String), BlobError> {
        if bytes.is_empty() {
            return Err(BlobError::Empty);
        }
        let id = format!("img-{:08}", self.next_id);
        match &mut self.backend {
            Backend::Dir(dir) => {
                let path = dir.join(&id);
                fs::write(&path, bytes).map_err(|source| BlobError::Io { path, source })?;
            }
            Backend::Memory(map) => {
                map.insert(id.clone(), bytes.to_vec());
            }
        }
        self.next_id += 1;
        Ok((Digest::of(bytes), id))
    }

    pub fn get(&self, image_id: &str) -> Result<Vec<u8>, AnchorError> {
        match &self.backend {
            Backend::Dir(dir) => match fs::read(dir.join(image_id)) {
                Ok(b) => Ok(b),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    Err(AnchorError::Missing(image_id.to_owned()))
                }
                Err(e) => Err(AnchorError::Unreadable {
                    image_id: image_id.to_owned(),
                    reason: e.to_string(),
                }),
            },
            Backend::Memory(map) => map
                .get(image_id)
                .cloned()
                .ok_or_else(|| AnchorError::Missing(image_id.to_owned())),
        }
    }

    /// Test hook for tamper experiments on the in-memory backend.
    pub fn overwrite(&mut self, image_id: &str, bytes: Vec<u8>) -> Result<(), BlobError> {
        match &mut self.backend {
            Backend::Dir(dir) => {
                let path = dir.join(image_id);
                fs::write(&path, bytes).map_err(|source| BlobError::Io { path, source })
            }
            Backend::Memory(map) => {
                map.insert(image_id.to_owned(), bytes);
                Ok(())
            }
        }
    }

    /// Succeeds iff the stored bytes hash to `expected`.
    pub fn verify_anchor(&self, image_id: &str, expected: &Digest) -> Result<(), AnchorError> {
        let bytes = self.get(image_id)?;
        let actual = Digest::of(&bytes);
        if actual != *expected {
            return Err(AnchorError::Mismatch {
                image_id: image_id.to_owned(),
                expected: *expected,
                actual,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Dir(dir) => fs::read_dir(dir).map(|r| r.count()).unwrap_or(0),
            Backend::Memory(map) => map.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
