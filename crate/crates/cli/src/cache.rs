//! Probe cache with single-flight deduplication and optional JSON-lines
//! persistence.
//!
//! Each persisted line is
//! `{"model_name": ..., "sentence_hash": <sha256 hex>, "token_index": n, "p": x}`.
//! Lines for other models are ignored on load. Store I/O failures never fail
//! a probe: the cache logs a warning and keeps working in memory.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use bias_attribution_core::{
    BackendError, BackendInfo, ProbeError, ProbeOutcome, ProbeRequest, ProbeResult,
    ScoringBackend, SubwordToken, TargetProbability,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_name: String,
    pub sentence_hash: String,
    pub token_index: usize,
    pub p: f64,
}

pub fn sentence_hash(sentence: &str) -> String {
    hex::encode(Sha256::digest(sentence.as_bytes()))
}

type Key = (String, usize);

#[derive(Debug, Clone)]
enum SlotValue {
    Probability(TargetProbability),
    Rejected(ProbeError),
    Failed(BackendError),
}

#[derive(Default)]
struct Slot {
    value: Mutex<Option<SlotValue>>,
    ready: Condvar,
}

impl Slot {
    fn filled(value: SlotValue) -> Self {
        Self {
            value: Mutex::new(Some(value)),
            ready: Condvar::new(),
        }
    }

    fn fill(&self, value: SlotValue) {
        *self.value.lock().unwrap() = Some(value);
        self.ready.notify_all();
    }

    fn wait(&self) -> SlotValue {
        let mut guard = self.value.lock().unwrap();
        while guard.is_none() {
            guard = self.ready.wait(guard).unwrap();
        }
        guard.clone().unwrap()
    }
}

pub struct CachedBackend<B> {
    inner: B,
    info: BackendInfo,
    slots: Mutex<HashMap<Key, Arc<Slot>>>,
    tokens: Mutex<HashMap<String, Vec<SubwordToken>>>,
    store: Mutex<Option<File>>,
    warnings: Mutex<Vec<String>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: ScoringBackend> CachedBackend<B> {
    /// In-memory cache only.
    pub fn new(inner: B) -> Result<Self, BackendError> {
        let info = inner.info()?;
        info.validate()?;
        Ok(Self {
            inner,
            info,
            slots: Mutex::new(HashMap::new()),
            tokens: Mutex::new(HashMap::new()),
            store: Mutex::new(None),
            warnings: Mutex::new(Vec::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    /// Loads previously persisted probes from `path` and appends new ones to it.
    pub fn with_store(inner: B, path: &Path) -> Result<Self, BackendError> {
        let cache = Self::new(inner)?;
        cache.load_store(path);
        match OpenOptions::new().create(true).append(true).open(path) {
            Ok(file) => *cache.store.lock().unwrap() = Some(file),
            Err(e) => cache.warn(format!("probe cache {} not writable, continuing in memory: {e}", path.display())),
        }
        Ok(cache)
    }

    fn load_store(&self, path: &Path) {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return,
            Err(e) => {
                self.warn(format!("probe cache {} not readable: {e}", path.display()));
                return;
            }
        };
        let mut slots = self.slots.lock().unwrap();
        let mut skipped = 0usize;
        for line in BufReader::new(file).lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    drop(slots);
                    self.warn(format!("probe cache {} not readable: {e}", path.display()));
                    return;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheRecord>(&line) {
                Ok(r) if r.model_name == self.info.model_name => match TargetProbability::new(r.p) {
                    Ok(p) => {
                        slots.insert(
                            (r.sentence_hash, r.token_index),
                            Arc::new(Slot::filled(SlotValue::Probability(p))),
                        );
                    }
                    Err(_) => skipped += 1,
                },
                Ok(_) => {}
                Err(_) => skipped += 1,
            }
        }
        drop(slots);
        if skipped > 0 {
            self.warn(format!("probe cache {}: skipped {skipped} unreadable line(s)", path.display()));
        }
    }

    fn warn(&self, message: String) {
        log::warn!("{message}");
        self.warnings.lock().unwrap().push(message);
    }

    fn persist(&self, records: &[CacheRecord]) {
        let mut store = self.store.lock().unwrap();
        let Some(file) = store.as_mut() else {
            return;
        };
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).expect("cache records serialize");
            buf.push(b'\n');
        }
        if let Err(e) = file.write_all(&buf).and_then(|_| file.flush()) {
            *store = None;
            drop(store);
            self.warn(format!("probe cache write failed, continuing in memory: {e}"));
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    /// Warnings raised by the store so far.
    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }
}

impl<B: ScoringBackend> ScoringBackend for CachedBackend<B> {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        Ok(self.info.clone())
    }

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError> {
        if let Some(tokens) = self.tokens.lock().unwrap().get(sentence) {
            return Ok(tokens.clone());
        }
        let tokens = self.inner.tokenize(sentence)?;
        self.tokens
            .lock()
            .unwrap()
            .insert(sentence.to_string(), tokens.clone());
        Ok(tokens)
    }

    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        let mut owned: Vec<(usize, Key, Arc<Slot>)> = Vec::new();
        let slots: Vec<Arc<Slot>> = {
            let mut map = self.slots.lock().unwrap();
            requests
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let key = (sentence_hash(&r.sentence), r.token_index);
                    if let Some(slot) = map.get(&key) {
                        self.hits.fetch_add(1, Ordering::SeqCst);
                        return slot.clone();
                    }
                    self.misses.fetch_add(1, Ordering::SeqCst);
                    let slot = Arc::new(Slot::default());
                    map.insert(key.clone(), slot.clone());
                    owned.push((i, key, slot.clone()));
                    slot
                })
                .collect()
        };

        if !owned.is_empty() {
            let batch: Vec<ProbeRequest> = owned.iter().map(|(i, _, _)| requests[*i].clone()).collect();
            let outcome = self.inner.probe(&batch).and_then(|results| {
                if results.len() == batch.len() {
                    Ok(results)
                } else {
                    Err(BackendError::Protocol(format!(
                        "backend returned {} result(s) for {} request(s)",
                        results.len(),
                        batch.len()
                    )))
                }
            });
            match outcome {
                Ok(results) => {
                    let mut fresh = Vec::new();
                    for ((_, key, slot), result) in owned.iter().zip(results) {
                        match result {
                            Ok(r) => {
                                fresh.push(CacheRecord {
                                    model_name: self.info.model_name.clone(),
                                    sentence_hash: key.0.clone(),
                                    token_index: key.1,
                                    p: r.p.value(),
                                });
                                slot.fill(SlotValue::Probability(r.p));
                            }
                            Err(e) => slot.fill(SlotValue::Rejected(e)),
                        }
                    }
                    self.persist(&fresh);
                }
                Err(e) => {
                    let mut map = self.slots.lock().unwrap();
                    for (_, key, slot) in &owned {
                        map.remove(key);
                        slot.fill(SlotValue::Failed(e.clone()));
                    }
                    return Err(e);
                }
            }
        }

        requests
            .iter()
            .zip(slots)
            .map(|(r, slot)| match slot.wait() {
                SlotValue::Probability(p) => Ok(Ok(ProbeResult { request: r.clone(), p })),
                SlotValue::Rejected(e) => Ok(Err(e)),
                SlotValue::Failed(e) => Err(e),
            })
            .collect()
    }
}
