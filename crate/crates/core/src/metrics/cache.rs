use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluator::{EvalContext, EvaluationRecord};
use crate::error::{Error, Result};

/// Hex SHA-256 of the context's canonical JSON (data, configs, pool, seed).
pub fn fingerprint(ctx: &EvalContext) -> Result<String> {
    let bytes = serde_json::to_vec(ctx)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize, Deserialize)]
struct Line {
    fingerprint: String,
    encoding: String,
    record: EvaluationRecord,
}

/// Evaluation records keyed by strategy encoding, optionally mirrored to an
/// append-only JSON-lines file.
///
/// Lines written under another fingerprint, and lines that fail to parse
/// (for example a write cut short), are ignored on load.
#[derive(Debug)]
pub struct EvalCache {
    fingerprint: String,
    records: Mutex<HashMap<String, EvaluationRecord>>,
    file: Option<(PathBuf, Mutex<File>)>,
    skipped: usize,
}

impl EvalCache {
    pub fn in_memory(fingerprint: impl Into<String>) -> Self {
        EvalCache {
            fingerprint: fingerprint.into(),
            records: Mutex::new(HashMap::new()),
            file: None,
            skipped: 0,
        }
    }

    /// Loads matching records from `path` (if it exists) and appends new ones to it.
    pub fn open(path: impl AsRef<Path>, fingerprint: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let fingerprint = fingerprint.into();
        let mut records = HashMap::new();
        let mut skipped = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Line>(&line) {
                    Ok(l) if l.fingerprint == fingerprint && l.record.strategy.encoding() == l.encoding => {
                        records.insert(l.encoding, l.record);
                    }
                    Ok(_) => {}
                    Err(_) => skipped += 1,
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(EvalCache {
            fingerprint,
            records: Mutex::new(records),
            file: Some((path.to_path_buf(), Mutex::new(file))),
            skipped,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Number of unreadable lines ignored on load.
    pub fn skipped_lines(&self) -> usize {
        self.skipped
    }

    pub fn get(&self, encoding: &str) -> Option<EvaluationRecord> {
        self.records.lock().expect("cache lock poisoned").get(encoding).cloned()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `record`; a key already present is left as is, since records
    /// for the same key are identical up to timing.
    pub fn insert(&self, record: &EvaluationRecord) -> Result<()> {
        let encoding = record.strategy.encoding();
        {
            let mut map = self.records.lock().expect("cache lock poisoned");
            if map.contains_key(&encoding) {
                return Ok(());
            }
            map.insert(encoding.clone(), record.clone());
        }
        if let Some((path, file)) = &self.file {
            let mut line = serde_json::to_string(&Line {
                fingerprint: self.fingerprint.clone(),
                encoding,
                record: record.clone(),
            })?;
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}
