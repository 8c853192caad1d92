//! File metadata and recursive directory scanning.

use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::hash::{hash_file, ContentHash, HashError};

/// Metadata describing one hosted file. This is what servers list, indexers
/// store and clients confirm before downloading.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileRecord {
    pub hash: ContentHash,
    pub name: String,
    pub size_bytes: u64,
    pub modified_unix_s: i64,
    /// Path below the served root, '/'-separated.
    pub rel_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("rel_path must not be empty")]
    EmptyPath,
    #[error("rel_path must not begin with '/'")]
    Absolute,
    #[error("rel_path must not contain '..', '.' or empty segments")]
    BadSegment,
    #[error("name must equal the final segment of rel_path")]
    NameMismatch,
}

impl FileRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        validate_rel_path(&self.rel_path)?;
        let last = self.rel_path.rsplit('/').next().unwrap_or_default();
        if last != self.name {
            return Err(RecordError::NameMismatch);
        }
        Ok(())
    }
}

pub fn validate_rel_path(rel_path: &str) -> Result<(), RecordError> {
    if rel_path.is_empty() {
        return Err(RecordError::EmptyPath);
    }
    if rel_path.starts_with('/') {
        return Err(RecordError::Absolute);
    }
    if rel_path
        .split('/')
        .any(|seg| seg.is_empty() || seg == ".." || seg == "." || seg.contains('\\'))
    {
        return Err(RecordError::BadSegment);
    }
    Ok(())
}

/// A scanned file together with its location on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedFile {
    pub record: FileRecord,
    pub path: PathBuf,
}

#[derive(Debug, Default, Clone)]
pub struct ScanReport {
    /// Sorted by `rel_path`.
    pub files: Vec<ScannedFile>,
    /// Entries that could not be read; the scan carried on past them.
    pub warnings: Vec<String>,
}

impl ScanReport {
    pub fn records(&self) -> Vec<FileRecord> {
        self.files.iter().map(|f| f.record.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("scan root {0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("cannot read scan root {path}: {source}")]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Walk `root`, hashing every regular file. Symbolic links are never
/// followed; hidden files are included.
pub fn scan_directory(root: &Path) -> Result<ScanReport, ScanError> {
    let meta = std::fs::metadata(root).map_err(|source| ScanError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(ScanError::NotADirectory(root.to_path_buf()));
    }
    std::fs::read_dir(root).map_err(|source| ScanError::Root {
        path: root.to_path_buf(),
        source,
    })?;

    let mut report = ScanReport::default();
    for entry in WalkDir::new(root).follow_links(false).min_depth(1) {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                report.warnings.push(format!("skipped: {e}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = match relative_path(root, entry.path()) {
            Some(r) => r,
            None => {
                report
                    .warnings
                    .push(format!("skipped non-UTF-8 path {}", entry.path().display()));
                continue;
            }
        };
        match describe(entry.path(), rel) {
            Ok(record) => report.files.push(ScannedFile {
                record,
                path: entry.path().to_path_buf(),
            }),
            Err(e) => report
                .warnings
                .push(format!("skipped {}: {e}", entry.path().display())),
        }
    }
    report
        .files
        .sort_by(|a, b| a.record.rel_path.cmp(&b.record.rel_path));
    Ok(report)
}

fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
    Some(parts?.join("/"))
}

fn describe(path: &Path, rel_path: String) -> Result<FileRecord, HashError> {
    let meta = std::fs::metadata(path).map_err(|source| HashError {
        position: 0,
        source,
    })?;
    let modified_unix_s = meta
        .modified()
        .ok()
        .and_then(|m| m.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    let (hash, size_bytes) = hash_file(path)?;
    let name = rel_path.rsplit('/').next().unwrap_or_default().to_string();
    Ok(FileRecord {
        hash,
        name,
        size_bytes,
        modified_unix_s,
        rel_path,
    })
}
