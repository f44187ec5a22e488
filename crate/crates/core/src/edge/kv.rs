//! In-process key-value cache with per-key compare-and-swap.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use crate::ssg::{DeployId, RenderedPage};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub path: String,
    /// Set only for deploy-scoped caching.
    pub deploy: Option<DeployId>,
}

impl CacheKey {
    pub fn path(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            deploy: None,
        }
    }

    pub fn scoped(path: impl Into<String>, deploy: DeployId) -> Self {
        Self {
            path: path.into(),
            deploy: Some(deploy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub path: String,
    pub page: RenderedPage,
    /// Clock reading when the entry was written.
    pub stored_at: Duration,
    pub deploy_id: DeployId,
}

impl CacheEntry {
    /// `ttl = None` means the entry never goes stale.
    pub fn is_stale(&self, now: Duration, ttl: Option<Duration>) -> bool {
        match ttl {
            Some(ttl) => now.saturating_sub(self.stored_at) > ttl,
            None => false,
        }
    }

    fn supersedes(&self, other: &CacheEntry) -> bool {
        (self.deploy_id, self.stored_at) >= (other.deploy_id, other.stored_at)
    }
}

/// Every operation holds the map lock for its whole duration, so operations
/// are linearizable per key (and globally).
#[derive(Debug, Default)]
pub struct KvStore {
    map: Mutex<HashMap<CacheKey, CacheEntry>>,
}

impl KvStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.map.lock().unwrap().get(key).cloned()
    }

    /// Replaces the entry at `key` only if its current content hash equals
    /// `expected` (`None` = key absent). Returns whether the swap happened.
    pub fn compare_and_swap(
        &self,
        key: CacheKey,
        expected: Option<crate::digest::Digest>,
        entry: CacheEntry,
    ) -> bool {
        let mut map = self.map.lock().unwrap();
        let current = map.get(&key).map(|e| e.page.content_hash());
        if current != expected {
            return false;
        }
        map.insert(key, entry);
        true
    }

    /// Stores `entry` unless the key already holds one from a later deploy
    /// or written later. Returns whether the entry was stored.
    pub fn put_if_newer(&self, key: CacheKey, entry: CacheEntry) -> bool {
        let mut map = self.map.lock().unwrap();
        match map.get(&key) {
            Some(existing) if !entry.supersedes(existing) => false,
            _ => {
                map.insert(key, entry);
                true
            }
        }
    }

    pub fn retain(&self, mut keep: impl FnMut(&CacheKey, &CacheEntry) -> bool) -> usize {
        let mut map = self.map.lock().unwrap();
        let before = map.len();
        map.retain(|k, v| keep(k, v));
        before - map.len()
    }

    pub fn clear(&self) -> usize {
        let mut map = self.map.lock().unwrap();
        let n = map.len();
        map.clear();
        n
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
