use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::engine::FitnessKind;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub prompt: String,
    pub dataset: String,
    pub kind: FitnessKind,
}

impl CacheKey {
    pub fn new(prompt: &str, dataset: &str, kind: FitnessKind) -> Self {
        Self {
            prompt: prompt.into(),
            dataset: dataset.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(flatten)]
    pub key: CacheKey,
    pub fitness: f64,
}

/// Fitness memo keyed by (prompt, dataset fingerprint, fitness kind).
#[derive(Debug, Default)]
pub struct FitnessCache {
    map: RwLock<HashMap<CacheKey, f64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl FitnessCache {
    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        let found = self.map.read().expect("cache lock poisoned").get(key).copied();
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::SeqCst);
        found
    }

    pub fn insert(&self, key: CacheKey, fitness: f64) {
        self.map
            .write()
            .expect("cache lock poisoned")
            .entry(key)
            .or_insert(fitness);
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries, sorted by key so snapshots serialize identically.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let mut out: Vec<CacheEntry> = self
            .map
            .read()
            .expect("cache lock poisoned")
            .iter()
            .map(|(k, &v)| CacheEntry {
                key: k.clone(),
                fitness: v,
            })
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    pub fn restore(&self, entries: impl IntoIterator<Item = CacheEntry>) {
        let mut map = self.map.write().expect("cache lock poisoned");
        for e in entries {
            map.insert(e.key, e.fitness);
        }
    }
}
