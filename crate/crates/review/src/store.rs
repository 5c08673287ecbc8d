//! Directory-backed spec store: `<id>.json` holds the current document and
//! `<id>.history/v<revision>.json` every version ever written.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use cadmap_core::error::{IoError, ReviewError};
use cadmap_core::io::{read_json, write_json};
use cadmap_core::{Approval, MappingStatus, UnifiedSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no specification with id `{0}`")]
    NotFound(String),
    #[error("stale revision: expected {expected}, current is {current}")]
    Stale { expected: u64, current: u64 },
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub id: String,
    pub part_id: String,
    pub revision: u64,
    pub accepted: usize,
    pub flagged: usize,
    pub unmapped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approval: Option<Approval>,
}

impl SpecSummary {
    pub fn of(id: &str, spec: &UnifiedSpec) -> Self {
        SpecSummary {
            id: id.to_string(),
            part_id: spec.part_id.clone(),
            revision: spec.revision,
            accepted: spec.mappings.iter().filter(|m| m.status.is_live()).count(),
            flagged: spec
                .mappings
                .iter()
                .filter(|m| m.status == MappingStatus::Flagged)
                .count(),
            unmapped: spec.unmapped_entities.len(),
            approval: spec.approval.clone(),
        }
    }
}

pub struct SpecStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

/// Ids are file stems; anything that could escape the directory is unknown.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl SpecStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IoError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| IoError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(SpecStore {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn history_path(&self, id: &str, revision: u64) -> PathBuf {
        self.dir
            .join(format!("{id}.history"))
            .join(format!("v{revision}.json"))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn ids(&self) -> Result<Vec<String>, IoError> {
        let entries = fs::read_dir(&self.dir).map_err(|source| IoError::Read {
            path: self.dir.display().to_string(),
            source,
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix(".json"))
                    .map(str::to_string)
            })
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn list(&self) -> Result<Vec<SpecSummary>, StoreError> {
        let mut out = Vec::new();
        for id in self.ids()? {
            let spec = self.get(&id)?;
            out.push(SpecSummary::of(&id, &spec));
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Result<UnifiedSpec, StoreError> {
        let path = self.path(id);
        if !valid_id(id) || !path.is_file() {
            return Err(StoreError::NotFound(id.to_string()));
        }
        Ok(read_json(&path)?)
    }

    /// Adds or replaces a document and records it in history.
    pub fn put(&self, id: &str, spec: &UnifiedSpec) -> Result<(), StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let lock = self.lock(id);
        let _guard = lock.lock().expect("spec lock");
        self.write(id, spec)
    }

    fn write(&self, id: &str, spec: &UnifiedSpec) -> Result<(), StoreError> {
        write_json(&self.history_path(id, spec.revision), spec)?;
        write_json(&self.path(id), spec)?;
        Ok(())
    }

    /// Read-modify-write under the per-spec lock. When `expected` is given
    /// it must equal the stored revision.
    pub fn update<F>(
        &self,
        id: &str,
        expected: Option<u64>,
        f: F,
    ) -> Result<UnifiedSpec, StoreError>
    where
        F: FnOnce(&UnifiedSpec) -> Result<UnifiedSpec, ReviewError>,
    {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("spec lock");
        let current = self.get(id)?;
        if let Some(expected) = expected {
            if expected != current.revision {
                return Err(StoreError::Stale {
                    expected,
                    current: current.revision,
                });
            }
        }
        let next = f(&current)?;
        self.write(id, &next)?;
        Ok(next)
    }

    pub fn history(&self, id: &str) -> Result<Vec<u64>, StoreError> {
        self.get(id)?;
        let dir = self.dir.join(format!("{id}.history"));
        let mut revs: Vec<u64> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(Result::ok)
                .filter_map(|e| {
                    e.file_name()
                        .to_str()
                        .and_then(|n| n.strip_prefix('v')?.strip_suffix(".json")?.parse().ok())
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        revs.sort_unstable();
        Ok(revs)
    }
}
