//! Content-addressed artifact store. Entries are keyed by a hash of their
//! inputs, written once through a temporary file, and never modified.

use std::path::PathBuf;

use crate::{sha256_hex, write_atomic, Artifact, HarnessError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    pub dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `CLAB_CACHE_DIR`, else `$HOME/.cache/clab`, else the system temp dir.
    pub fn from_env() -> Self {
        if let Some(d) = std::env::var_os("CLAB_CACHE_DIR") {
            return Self::new(d);
        }
        match std::env::var_os("HOME") {
            Some(h) => Self::new(PathBuf::from(h).join(".cache").join("clab")),
            None => Self::new(std::env::temp_dir().join("clab-cache")),
        }
    }

    /// Hash of a kind tag and the serialized inputs.
    pub fn key(kind: &str, inputs: &[&[u8]]) -> String {
        let mut all = kind.as_bytes().to_vec();
        for part in inputs {
            all.extend_from_slice(&(part.len() as u64).to_le_bytes());
            all.extend_from_slice(part);
        }
        format!("{kind}-{}", sha256_hex(&all))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    /// Returns the stored bytes, computing and storing them on a miss.
    pub fn get_or_insert(
        &self,
        key: &str,
        make: impl FnOnce() -> Result<Vec<u8>, HarnessError>,
    ) -> Result<(Vec<u8>, Artifact), HarnessError> {
        let path = self.path(key);
        let (bytes, hit) = match std::fs::read(&path) {
            Ok(b) => (b, true),
            Err(_) => {
                let b = make()?;
                write_atomic(&path, &b)?;
                (b, false)
            }
        };
        let art = Artifact {
            name: key.to_string(),
            sha256: sha256_hex(&bytes),
            cache_hit: Some(hit),
        };
        Ok((bytes, art))
    }
}
