//! Client-side result cache: LRU at a fixed capacity plus a TTL.
//!
//! Keys are digests; the cached text itself is never stored.

use std::fs;
use std::io;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use lru::LruCache;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_CAPACITY: usize = 512;
pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, by: Duration) {
        self.0.fetch_add(by.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKeyParts<'a> {
    pub text: &'a str,
    pub plugin_id: &'a str,
    pub plugin_config_digest: &'a str,
    pub model_id: &'a str,
}

impl CacheKeyParts<'_> {
    pub fn key(&self) -> String {
        let text_digest = Sha256::digest(self.text.as_bytes());
        let mut h = Sha256::new();
        h.update(text_digest);
        for part in [self.plugin_id, self.plugin_config_digest, self.model_id] {
            h.update([0]);
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    pub inserted_at_ms: u64,
    pub last_access_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    capacity: usize,
    ttl_ms: u64,
    /// least recently used first
    entries: Vec<CacheEntry>,
}

pub struct ResultCache {
    entries: Mutex<LruCache<String, CacheEntry>>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
}

impl Default for ResultCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY, DEFAULT_TTL)
    }
}

impl ResultCache {
    pub fn new(capacity: usize, ttl: Duration) -> Self {
        Self::with_clock(capacity, ttl, Arc::new(SystemClock))
    }

    pub fn with_clock(capacity: usize, ttl: Duration, clock: Arc<dyn Clock>) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            entries: Mutex::new(LruCache::new(capacity)),
            ttl,
            clock,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.entries
            .lock()
            .map(|e| e.cap().get())
            .unwrap_or(DEFAULT_CAPACITY)
    }

    pub fn get_raw(&self, key: &str) -> Option<String> {
        let now = self.clock.now_ms();
        let ttl = self.ttl.as_millis() as u64;
        let mut entries = self.entries.lock().ok()?;
        let expired = entries
            .peek(key)
            .map(|e| now.saturating_sub(e.inserted_at_ms) > ttl)?;
        if expired {
            entries.pop(key);
            return None;
        }
        let entry = entries.get_mut(key)?;
        entry.last_access_ms = now;
        Some(entry.value.clone())
    }

    pub fn put_raw(&self, key: String, value: String) {
        let now = self.clock.now_ms();
        if let Ok(mut entries) = self.entries.lock() {
            entries.put(
                key.clone(),
                CacheEntry {
                    key,
                    value,
                    inserted_at_ms: now,
                    last_access_ms: now,
                },
            );
        }
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.entries
            .lock()
            .map(|e| e.iter().rev().map(|(_, v)| v.clone()).collect())
            .unwrap_or_default()
    }

    /// Returns the stored value for `parts` or runs `producer` and stores its
    /// output. The flag is `true` when the value came from the cache.
    pub fn cached_analyze<T, E, F>(&self, parts: &CacheKeyParts<'_>, producer: F) -> Result<(T, bool), E>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, E>,
    {
        let key = parts.key();
        if let Some(raw) = self.get_raw(&key) {
            if let Ok(value) = serde_json::from_str(&raw) {
                return Ok((value, true));
            }
        }
        let value = producer()?;
        if let Ok(raw) = serde_json::to_string(&value) {
            self.put_raw(key, raw);
        }
        Ok((value, false))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let file = CacheFile {
            capacity: self.capacity(),
            ttl_ms: self.ttl.as_millis() as u64,
            entries: self.entries(),
        };
        let json = serde_json::to_string(&file).map_err(io::Error::other)?;
        fs::write(path, json)
    }

    /// Loads a cache file; a missing or unreadable file yields an empty cache.
    pub fn load_or_default(path: &Path, capacity: usize, ttl: Duration) -> Self {
        let cache = Self::new(capacity, ttl);
        let Ok(raw) = fs::read_to_string(path) else {
            return cache;
        };
        let Ok(file) = serde_json::from_str::<CacheFile>(&raw) else {
            return cache;
        };
        if let Ok(mut entries) = cache.entries.lock() {
            for e in file.entries {
                entries.put(e.key.clone(), e);
            }
        }
        cache
    }
}
