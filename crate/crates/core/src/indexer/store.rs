//! Embedded ordered key-value store backing the index.
//!
//! All writes arrive as atomic batches appended to a single log file and
//! fsync'd before they become visible. The live key space is held in an
//! ordered in-memory map rebuilt from the log on open; a torn trailing frame
//! (crash mid-append) is discarded. When the log grows well past the live
//! data it is rewritten as one snapshot frame and swapped in by rename.
//!
//! Frame layout: `len: u32 LE | crc32(payload): u32 LE | payload`.
//! Payload: `op_count: u32 LE` then per op `tag: u8` (1 = put, 2 = delete),
//! `key_len: u32 LE`, key bytes and, for puts, `val_len: u32 LE`, value bytes.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

const LOG_FILE: &str = "index.log";
const COMPACT_FILE: &str = "index.log.compact";
const TAG_PUT: u8 = 1;
const TAG_DELETE: u8 = 2;
const FRAME_HEADER: usize = 8;
const COMPACT_MIN_LOG: u64 = 4 << 20;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Put(String, Vec<u8>),
    Delete(String),
}

#[derive(Debug, Default, Clone)]
pub struct WriteBatch {
    ops: Vec<Op>,
}

impl WriteBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<Vec<u8>>) {
        self.ops.push(Op::Put(key.into(), value.into()));
    }

    pub fn delete(&mut self, key: impl Into<String>) {
        self.ops.push(Op::Delete(key.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 * self.ops.len() + 4);
        out.extend_from_slice(&(self.ops.len() as u32).to_le_bytes());
        for op in &self.ops {
            match op {
                Op::Put(k, v) => {
                    out.push(TAG_PUT);
                    out.extend_from_slice(&(k.len() as u32).to_le_bytes());
                    out.extend_from_slice(k.as_bytes());
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    out.extend_from_slice(v);
                }
                Op::Delete(k) => {
                    out.push(TAG_DELETE);
                    out.extend_from_slice(&(k.len() as u32).to_le_bytes());
                    out.extend_from_slice(k.as_bytes());
                }
            }
        }
        out
    }

    fn decode(mut payload: &[u8]) -> Option<Self> {
        fn take<'a>(buf: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
            if buf.len() < n {
                return None;
            }
            let (head, tail) = buf.split_at(n);
            *buf = tail;
            Some(head)
        }
        fn take_u32(buf: &mut &[u8]) -> Option<usize> {
            Some(u32::from_le_bytes(take(buf, 4)?.try_into().ok()?) as usize)
        }
        let count = take_u32(&mut payload)?;
        let mut ops = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let tag = take(&mut payload, 1)?[0];
            let klen = take_u32(&mut payload)?;
            let key = String::from_utf8(take(&mut payload, klen)?.to_vec()).ok()?;
            match tag {
                TAG_PUT => {
                    let vlen = take_u32(&mut payload)?;
                    ops.push(Op::Put(key, take(&mut payload, vlen)?.to_vec()));
                }
                TAG_DELETE => ops.push(Op::Delete(key)),
                _ => return None,
            }
        }
        payload.is_empty().then_some(Self { ops })
    }
}

struct LogWriter {
    file: File,
    len: u64,
}

pub struct LogStore {
    dir: PathBuf,
    map: RwLock<BTreeMap<String, Vec<u8>>>,
    writer: Mutex<LogWriter>,
}

impl LogStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join(LOG_FILE);
        let _ = std::fs::remove_file(dir.join(COMPACT_FILE));
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw).map_err(io_err(&log_path))?;

        let mut map = BTreeMap::new();
        let mut good = 0usize;
        while let Some((batch, used)) = read_frame(&raw[good..]) {
            apply_ops(&mut map, &batch.ops);
            good += used;
        }
        if good < raw.len() {
            tracing::warn!(
                discarded = raw.len() - good,
                "discarding torn tail of index log"
            );
            file.set_len(good as u64).map_err(io_err(&log_path))?;
        }
        file.seek(SeekFrom::Start(good as u64))
            .map_err(io_err(&log_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            map: RwLock::new(map),
            writer: Mutex::new(LogWriter {
                file,
                len: good as u64,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        self.map.read().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.read().unwrap().contains_key(key)
    }

    /// All pairs whose key starts with `prefix`, in key order.
    pub fn scan_prefix(&self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        let map = self.map.read().unwrap();
        map.range::<str, _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        let map = self.map.read().unwrap();
        map.range::<str, _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn count_prefix(&self, prefix: &str) -> usize {
        let map = self.map.read().unwrap();
        map.range::<str, _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .count()
    }

    /// Durably append `batch`, then make it visible to readers all at once.
    pub fn apply(&self, batch: WriteBatch) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        let frame = frame(&batch.encode());
        let log_path = self.dir.join(LOG_FILE);
        let mut writer = self.writer.lock().unwrap();
        writer
            .file
            .write_all(&frame)
            .and_then(|_| writer.file.sync_data())
            .map_err(|source| StoreError::Io {
                path: log_path.clone(),
                source,
            })?;
        writer.len += frame.len() as u64;
        let live = {
            let mut map = self.map.write().unwrap();
            apply_ops(&mut map, &batch.ops);
            (writer.len > COMPACT_MIN_LOG).then(|| live_bytes(&map))
        };
        if live.is_some_and(|live| writer.len > 2 * live) {
            self.compact_locked(&mut writer)?;
        }
        Ok(())
    }

    /// Rewrite the log as a single snapshot frame.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut writer = self.writer.lock().unwrap();
        self.compact_locked(&mut writer)
    }

    fn compact_locked(&self, writer: &mut LogWriter) -> Result<(), StoreError> {
        let tmp = self.dir.join(COMPACT_FILE);
        let log_path = self.dir.join(LOG_FILE);
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        let mut snapshot = WriteBatch::new();
        for (k, v) in self.map.read().unwrap().iter() {
            snapshot.put(k.clone(), v.clone());
        }
        let bytes = frame(&snapshot.encode());
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&bytes)
                .and_then(|_| f.sync_all())
                .map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, &log_path).map_err(io_err(&log_path))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        file.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        writer.file = file;
        writer.len = bytes.len() as u64;
        Ok(())
    }

    /// Bytes used on disk by the store directory.
    pub fn disk_size(&self) -> u64 {
        dir_size(&self.dir)
    }
}

pub fn dir_size(dir: &Path) -> u64 {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| e.metadata().ok())
        .map(|m| m.len())
        .sum()
}

fn live_bytes(map: &BTreeMap<String, Vec<u8>>) -> u64 {
    map.iter()
        .map(|(k, v)| (k.len() + v.len() + 9) as u64)
        .sum()
}

fn apply_ops(map: &mut BTreeMap<String, Vec<u8>>, ops: &[Op]) {
    for op in ops {
        match op {
            Op::Put(k, v) => {
                map.insert(k.clone(), v.clone());
            }
            Op::Delete(k) => {
                map.remove(k);
            }
        }
    }
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + FRAME_HEADER);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

fn read_frame(raw: &[u8]) -> Option<(WriteBatch, usize)> {
    if raw.len() < FRAME_HEADER {
        return None;
    }
    let len = u32::from_le_bytes(raw[0..4].try_into().ok()?) as usize;
    let crc = u32::from_le_bytes(raw[4..8].try_into().ok()?);
    let payload = raw.get(FRAME_HEADER..FRAME_HEADER + len)?;
    if crc32fast::hash(payload) != crc {
        return None;
    }
    Some((WriteBatch::decode(payload)?, FRAME_HEADER + len))
}
