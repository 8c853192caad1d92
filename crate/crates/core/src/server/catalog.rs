use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::hash::ContentHash;
use crate::scan::{scan_directory, FileRecord, ScanError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    /// Canonical record: the copy with the lexicographically first path.
    pub record: FileRecord,
    /// Every on-disk copy of this content, in rel_path order.
    pub paths: Vec<PathBuf>,
}

/// Content-addressed view of a served directory.
#[derive(Debug, Default, Clone)]
pub struct Catalog {
    by_hash: HashMap<ContentHash, CatalogEntry>,
    by_path: BTreeMap<String, ContentHash>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CatalogDelta {
    pub added: usize,
    pub removed: usize,
    pub changed: usize,
}

impl CatalogDelta {
    pub fn is_empty(&self) -> bool {
        self.added == 0 && self.removed == 0 && self.changed == 0
    }
}

impl Catalog {
    pub fn build(root: &Path) -> Result<Self, ScanError> {
        let report = scan_directory(root)?;
        let mut catalog = Catalog {
            warnings: report.warnings,
            ..Default::default()
        };
        // report.files is already sorted by rel_path, so the first copy wins
        for file in report.files {
            catalog
                .by_path
                .insert(file.record.rel_path.clone(), file.record.hash);
            catalog
                .by_hash
                .entry(file.record.hash)
                .and_modify(|e| e.paths.push(file.path.clone()))
                .or_insert_with(|| CatalogEntry {
                    record: file.record,
                    paths: vec![file.path],
                });
        }
        Ok(catalog)
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }

    pub fn get(&self, hash: &ContentHash) -> Option<&CatalogEntry> {
        self.by_hash.get(hash)
    }

    /// One record per distinct content, ordered by rel_path.
    pub fn list(&self) -> Vec<FileRecord> {
        let mut records: Vec<FileRecord> =
            self.by_hash.values().map(|e| e.record.clone()).collect();
        records.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));
        records
    }

    /// Path-level differences from `self` to `next`.
    pub fn delta(&self, next: &Catalog) -> CatalogDelta {
        let mut d = CatalogDelta::default();
        for (path, hash) in &next.by_path {
            match self.by_path.get(path) {
                None => d.added += 1,
                Some(old) if old != hash => d.changed += 1,
                Some(_) => {}
            }
        }
        d.removed = self
            .by_path
            .keys()
            .filter(|p| !next.by_path.contains_key(*p))
            .count();
        d
    }
}
