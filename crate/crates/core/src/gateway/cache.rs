//! Append-only JSONL replay cache, keyed by request content digest.
//!
//! One record per line; values are deterministic per key, so concurrent
//! writers can only ever append equal payloads for the same digest.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::CompletionRequest;

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    digest: String,
    request: CompletionRequest,
    completion: String,
}

/// Content-addressed completion store backed by a JSONL file.
pub struct ReplayCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    writer: Mutex<File>,
}

impl ReplayCache {
    /// Open (creating if needed) a cache file and load its index.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // Unparseable tails (e.g. a torn final write) are skipped;
                // the entry will simply be refetched and re-appended.
                if let Ok(rec) = serde_json::from_str::<CacheRecord>(&line) {
                    entries.insert(rec.digest, rec.completion);
                }
            }
        }
        let writer = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries
            .lock()
            .expect("cache lock")
            .get(digest)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a completion. Repeat puts for the same digest are ignored.
    pub fn put(&self, digest: &str, request: &CompletionRequest, completion: &str) {
        {
            let mut entries = self.entries.lock().expect("cache lock");
            if entries.contains_key(digest) {
                return;
            }
            entries.insert(digest.to_string(), completion.to_string());
        }
        let record = CacheRecord {
            digest: digest.to_string(),
            request: request.clone(),
            completion: completion.to_string(),
        };
        let line = serde_json::to_string(&record).expect("cache record serializes");
        let mut writer = self.writer.lock().expect("cache writer lock");
        // Write failures degrade to a warm-process cache only.
        let _ = writeln!(writer, "{line}");
        let _ = writer.flush();
    }
}
