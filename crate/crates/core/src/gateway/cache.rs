//! Response cache keyed by model, prompt hash, temperature and sample index.
//!
//! Persisted as JSON lines, one record per key, sorted so the file is stable.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::GenerationRequest;
use crate::seed::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub model: String,
    pub prompt_hash: String,
    /// Rendered with four decimals so float noise cannot split entries.
    pub temperature: String,
    pub sample_index: u32,
}

impl CacheKey {
    pub fn new(model: &str, request: &GenerationRequest) -> Self {
        Self {
            model: model.to_string(),
            prompt_hash: prompt_hash(&request.system_prompt, &request.user_prompt),
            temperature: format!("{:.4}", request.temperature),
            sample_index: request.sample_index,
        }
    }
}

pub fn prompt_hash(system_prompt: &str, user_prompt: &str) -> String {
    let mut buf = Vec::with_capacity(system_prompt.len() + user_prompt.len() + 16);
    buf.extend_from_slice(&(system_prompt.len() as u64).to_le_bytes());
    buf.extend_from_slice(system_prompt.as_bytes());
    buf.extend_from_slice(user_prompt.as_bytes());
    sha256_hex(&buf)
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    #[serde(flatten)]
    key: CacheKey,
    response: String,
}

/// Concurrent map; identical keys always carry identical values, so the last
/// write wins without coordination.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<CacheKey, String>>,
}

impl ResponseCache {
    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries.lock().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, response: String) {
        self.entries.lock().insert(key, response);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_from<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let cache = Self::default();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord =
                serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            cache.insert(rec.key, rec.response);
        }
        Ok(cache)
    }

    /// Loads `path` if it exists, else returns an empty cache.
    pub fn load_or_default(path: &Path) -> std::io::Result<Self> {
        match std::fs::File::open(path) {
            Ok(f) => Self::read_from(std::io::BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn write_to<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        let sorted: BTreeMap<CacheKey, String> = self.entries.lock().clone().into_iter().collect();
        for (key, response) in sorted {
            let rec = CacheRecord { key, response };
            writeln!(sink, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()
    }
}
