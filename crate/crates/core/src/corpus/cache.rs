// SPDX-License-Identifier: Apache-2.0

//! Write-once, content-addressed store for raw model responses.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::SystemTime;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    /// Key over everything that determines a sampled response.
    ///
    /// The fields are hashed through their JSON encoding, which is injective,
    /// so distinct tuples only collide on a SHA-256 collision.
    pub fn derive(
        model_id: &str,
        temperature: f64,
        max_tokens: u32,
        transcript: &str,
        sample_index: u64,
    ) -> Self {
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            model_id: &'a str,
            temperature_bits: u64,
            max_tokens: u32,
            transcript: &'a str,
            sample_index: u64,
        }
        let material = KeyMaterial {
            model_id,
            temperature_bits: temperature.to_bits(),
            max_tokens,
            transcript,
            sample_index,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        CacheKey(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        (hex.len() == 64 && hex.bytes().all(|b| b.is_ascii_hexdigit()))
            .then(|| CacheKey(hex.to_ascii_lowercase()))
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub value: String,
    pub created_at: SystemTime,
}

/// Directory of files named by hex key, each holding the response verbatim.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.as_hex())
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entry(key).map(|e| e.value)
    }

    /// Unreadable or non-UTF-8 entries count as misses.
    pub fn entry(&self, key: &CacheKey) -> Option<CacheEntry> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache entry {key} unreadable, treating as miss: {e}");
                return None;
            }
        };
        let value = match String::from_utf8(bytes) {
            Ok(v) => v,
            Err(_) => {
                log::warn!("cache entry {key} is not valid UTF-8, treating as miss");
                return None;
            }
        };
        let created_at = fs::metadata(&path)
            .and_then(|m| m.modified())
            .unwrap_or(SystemTime::UNIX_EPOCH);
        Some(CacheEntry {
            key: key.clone(),
            value,
            created_at,
        })
    }

    /// Stores `value` under `key`. Re-putting the identical value is a no-op;
    /// a different value is a write-once violation.
    pub fn put(&self, key: &CacheKey, value: &str) -> Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = self.get(key) {
            if existing == value {
                return Ok(());
            }
            return Err(Error::CacheConflict {
                key: key.to_string(),
            });
        }
        let path = self.path(key);
        let tmp = self.dir.join(format!(".{}.tmp", key.as_hex()));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(value.as_bytes())
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
