//! The file host: serves a scanned directory by content hash behind
//! single-use download tokens and a bounded download queue.

pub mod catalog;
pub mod gate;
pub mod http;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use catalog::{Catalog, CatalogDelta};
use gate::{Gate, GateConfig, GateError, StreamSlot};

use crate::hash::ContentHash;
use crate::scan::{FileRecord, ScanError};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub root: PathBuf,
    pub name: String,
    /// 0 = unlimited.
    pub max_concurrent: usize,
    pub queue_timeout: Duration,
    pub token_ttl: Duration,
    /// Base URL put in front of `/dl/{token}`. When unset the request's
    /// Host header is used.
    pub public_url: Option<String>,
}

impl ServeConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            name: "distrifs-server".into(),
            max_concurrent: 0,
            queue_timeout: Duration::from_secs(120),
            token_ttl: Duration::from_secs(60),
            public_url: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot serve {root}: {source}")]
    Startup {
        root: PathBuf,
        #[source]
        source: ScanError,
    },
    #[error("token_ttl must be positive")]
    ZeroTtl,
    #[error("no file with hash {0}")]
    NotFound(ContentHash),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("rescan failed, keeping previous catalog: {0}")]
    Rescan(ScanError),
    #[error("file for {hash} could not be opened: {source}")]
    Open {
        hash: ContentHash,
        #[source]
        source: std::io::Error,
    },
}

pub struct FileServer {
    config: ServeConfig,
    catalog: RwLock<Arc<Catalog>>,
    gate: Arc<Gate>,
}

/// An open file ready to stream, holding its concurrency slot.
pub struct Download {
    pub record: FileRecord,
    pub file: tokio::fs::File,
    pub len: u64,
    pub slot: StreamSlot,
}

impl FileServer {
    pub fn new(config: ServeConfig) -> Result<Arc<Self>, ServerError> {
        if config.token_ttl.is_zero() {
            return Err(ServerError::ZeroTtl);
        }
        let catalog = Catalog::build(&config.root).map_err(|source| ServerError::Startup {
            root: config.root.clone(),
            source,
        })?;
        for w in &catalog.warnings {
            tracing::warn!("{w}");
        }
        let gate = Gate::new(GateConfig {
            max_concurrent: config.max_concurrent,
            queue_timeout: config.queue_timeout,
            token_ttl: config.token_ttl,
        });
        tracing::info!(files = catalog.len(), "catalog built");
        Ok(Arc::new(Self {
            config,
            catalog: RwLock::new(Arc::new(catalog)),
            gate,
        }))
    }

    pub fn config(&self) -> &ServeConfig {
        &self.config
    }

    pub fn gate(&self) -> &Arc<Gate> {
        &self.gate
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        self.catalog.read().unwrap().clone()
    }

    pub fn list_files(&self) -> Vec<FileRecord> {
        self.catalog().list()
    }

    pub fn get_metadata(&self, hash: &ContentHash) -> Result<FileRecord, ServerError> {
        self.catalog()
            .get(hash)
            .map(|e| e.record.clone())
            .ok_or(ServerError::NotFound(*hash))
    }

    /// Grant a download key, possibly waiting in the queue.
    pub async fn request_token(
        &self,
        hash: &ContentHash,
    ) -> Result<gate::IssuedToken, ServerError> {
        self.get_metadata(hash)?;
        Ok(self.gate.acquire(*hash).await?)
    }

    /// Redeem `token` and open its file.
    pub async fn open_download(&self, token: &str) -> Result<Download, ServerError> {
        let (hash, slot) = self.gate.consume(token)?;
        let entry = self
            .catalog()
            .get(&hash)
            .cloned()
            .ok_or(ServerError::NotFound(hash))?;
        let mut last_err = None;
        for path in &entry.paths {
            match tokio::fs::File::open(path).await {
                Ok(file) => {
                    let len = file
                        .metadata()
                        .await
                        .map(|m| m.len())
                        .unwrap_or(entry.record.size_bytes);
                    return Ok(Download {
                        record: entry.record,
                        file,
                        len,
                        slot,
                    });
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(ServerError::Open {
            hash,
            source: last_err
                .unwrap_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no path")),
        })
    }

    /// Rescan the root and swap the catalog in atomically. Streams already
    /// open keep reading from their handles.
    pub async fn refresh_index(&self) -> Result<CatalogDelta, ServerError> {
        let root = self.config.root.clone();
        let next = tokio::task::spawn_blocking(move || Catalog::build(&root))
            .await
            .expect("scan task panicked")
            .map_err(ServerError::Rescan)?;
        let mut current = self.catalog.write().unwrap();
        let delta = current.delta(&next);
        *current = Arc::new(next);
        tracing::info!(
            added = delta.added,
            removed = delta.removed,
            changed = delta.changed,
            "catalog refreshed"
        );
        Ok(delta)
    }
}
