use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RawCompletion, Usage};
use crate::error::{Error, Result};

/// Hex SHA-256 over exactly (model, temperature, prompt).
pub fn cache_key(model: &str, prompt: &str, temperature: f64) -> String {
    let material = serde_json::to_string(&(model, temperature, prompt)).expect("strings and floats serialize");
    hex::encode(Sha256::digest(material.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEntry {
    pub model: String,
    pub temperature: f64,
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Default)]
struct KeyLocks {
    held: Mutex<HashSet<String>>,
    released: Condvar,
}

/// Held while a key is being looked up or filled; other requests for the
/// same key wait on it.
pub struct KeyGuard {
    locks: Arc<KeyLocks>,
    key: String,
}

impl Drop for KeyGuard {
    fn drop(&mut self) {
        self.locks.held.lock().unwrap().remove(&self.key);
        self.locks.released.notify_all();
    }
}

/// Response cache, in memory and optionally mirrored to `{dir}/{key}.json`.
/// Clones share state.
#[derive(Clone, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Arc<Mutex<HashMap<String, CachedEntry>>>,
    locks: Arc<KeyLocks>,
}

impl std::fmt::Debug for ResponseCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponseCache").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir: Some(dir), ..Self::default() })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn lock_key(&self, key: &str) -> KeyGuard {
        let mut held = self.locks.held.lock().unwrap();
        while held.contains(key) {
            held = self.locks.released.wait(held).unwrap();
        }
        held.insert(key.to_string());
        KeyGuard { locks: self.locks.clone(), key: key.to_string() }
    }

    fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Result<Option<CachedEntry>> {
        if let Some(e) = self.memory.lock().unwrap().get(key) {
            return Ok(Some(e.clone()));
        }
        let Some(path) = self.entry_path(key) else { return Ok(None) };
        if !path.exists() {
            return Ok(None);
        }
        let src = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let entry: CachedEntry =
            serde_json::from_str(&src).map_err(|e| Error::format(path.display().to_string(), e))?;
        self.memory.lock().unwrap().insert(key.to_string(), entry.clone());
        Ok(Some(entry))
    }

    pub fn put(&self, key: &str, model: &str, temperature: f64, raw: &RawCompletion) -> Result<()> {
        let entry = CachedEntry {
            model: model.to_string(),
            temperature,
            text: raw.text.clone(),
            usage: raw.usage,
        };
        if let Some(path) = self.entry_path(key) {
            let tmp = path.with_extension("json.tmp");
            let body = serde_json::to_string(&entry).map_err(|e| Error::format("cache entry", e))?;
            fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        self.memory.lock().unwrap().insert(key.to_string(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_component() {
        let base = cache_key("m", "p", 0.0);
        assert_eq!(base, cache_key("m", "p", 0.0));
        assert_ne!(base, cache_key("m2", "p", 0.0));
        assert_ne!(base, cache_key("m", "p2", 0.0));
        assert_ne!(base, cache_key("m", "p", 0.5));
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn disk_entries_survive_a_new_cache() {
        let dir = tempfile::tempdir().unwrap();
        let raw = RawCompletion { text: "passive".into(), usage: Some(Usage { prompt_tokens: 3, completion_tokens: 1 }) };
        let key = cache_key("m", "p", 0.0);
        ResponseCache::on_disk(dir.path()).unwrap().put(&key, "m", 0.0, &raw).unwrap();
        let fresh = ResponseCache::on_disk(dir.path()).unwrap();
        let hit = fresh.get(&key).unwrap().unwrap();
        assert_eq!(hit.text, "passive");
        assert_eq!(hit.usage, raw.usage);
    }
}
