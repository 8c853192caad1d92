//! An in-process network of indexers and file servers on loopback ports,
//! with deterministic fixtures and injectable faults.

pub mod edge;
pub mod scenario;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::client::scanner::ScannerHook;
use crate::client::ClientOptions;
use crate::clock::{unix_now, ManualClock};
use crate::hash::ContentHash;
use crate::indexer::{Indexer, IndexerConfig, IndexerError};
use crate::server::{FileServer, ServeConfig, ServerError};
pub use edge::{Edge, EdgeStats, FaultSpec, Faults};
pub use scenario::{run_scenario, Scenario, ScenarioEvent, ScenarioResult, Workload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSpec {
    pub path: String,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexerSpec {
    pub name: String,
    /// Names of indexers this one forwards searches to.
    #[serde(default)]
    pub peers: Vec<String>,
    /// Names of indexers that receive this one's crawl results.
    #[serde(default)]
    pub upstreams: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

impl IndexerSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            peers: Vec::new(),
            upstreams: Vec::new(),
            cutoff: None,
        }
    }

    pub fn peers(mut self, peers: &[&str]) -> Self {
        self.peers = peers.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub name: String,
    pub files: Vec<FileSpec>,
    /// Indexers that crawl this server at startup; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register_with: Option<Vec<String>>,
    #[serde(default)]
    pub max_concurrent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ttl_ms: Option<u64>,
    #[serde(default)]
    pub faults: FaultSpec,
}

impl ServerSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            files: Vec::new(),
            register_with: None,
            max_concurrent: 0,
            queue_timeout_ms: None,
            token_ttl_ms: None,
            faults: FaultSpec::default(),
        }
    }

    pub fn file(mut self, path: impl Into<String>, size: u64) -> Self {
        self.files.push(FileSpec {
            path: path.into(),
            size,
        });
        self
    }

    pub fn register_with(mut self, indexers: &[&str]) -> Self {
        self.register_with = Some(indexers.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn faults(mut self, faults: FaultSpec) -> Self {
        self.faults = faults;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// Fixture content is derived from this seed and each file's path, so
    /// the same path carries the same bytes on every server.
    #[serde(default)]
    pub seed: u64,
    pub indexers: Vec<IndexerSpec>,
    pub servers: Vec<ServerSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Indexer(#[from] IndexerError),
    #[error(transparent)]
    Client(#[from] crate::client::ClientError),
}

impl Topology {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Topology(m));
        let mut names = HashSet::new();
        for n in self
            .indexers
            .iter()
            .map(|i| &i.name)
            .chain(self.servers.iter().map(|s| &s.name))
        {
            if !names.insert(n.as_str()) {
                return err(format!("duplicate node name {n}"));
            }
        }
        let indexers: HashSet<&str> = self.indexers.iter().map(|i| i.name.as_str()).collect();
        for ix in &self.indexers {
            for p in ix.peers.iter().chain(&ix.upstreams) {
                if !indexers.contains(p.as_str()) {
                    return err(format!("{} links to unknown indexer {p}", ix.name));
                }
            }
        }
        for s in &self.servers {
            for ix in s.register_with.iter().flatten() {
                if !indexers.contains(ix.as_str()) {
                    return err(format!("{} registers with unknown indexer {ix}", s.name));
                }
            }
            for f in &s.files {
                crate::scan::validate_rel_path(&f.path)
                    .map_err(|e| SimError::Topology(format!("{}: {}: {e}", s.name, f.path)))?;
            }
        }
        Ok(())
    }
}

/// Deterministic bytes for a fixture file.
pub fn fixture_bytes(seed: u64, path: &str, size: u64) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(path.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut out = vec![0u8; size as usize];
    rng.fill_bytes(&mut out);
    out
}

/// Hash of [`fixture_bytes`] without keeping the content around.
pub fn fixture_hash(seed: u64, path: &str, size: u64) -> ContentHash {
    ContentHash::of(&fixture_bytes(seed, path, size))
}

fn write_fixture(dir: &Path, seed: u64, file: &FileSpec) -> std::io::Result<()> {
    let path = dir.join(&file.path);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, fixture_bytes(seed, &file.path, file.size))
}

struct Running {
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl Running {
    fn serve(listener: TcpListener, router: axum::Router) -> Self {
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Self {
            shutdown: Some(tx),
            task,
        }
    }

    async fn stop(&mut self) {
        let Some(tx) = self.shutdown.take() else {
            return;
        };
        let _ = tx.send(());
        // in-flight streams get a moment to drain, then are cut off
        if tokio::time::timeout(Duration::from_secs(2), &mut self.task)
            .await
            .is_err()
        {
            self.task.abort();
        }
    }
}

pub struct SimServer {
    pub name: String,
    pub url: String,
    pub server: Arc<FileServer>,
    pub edge: Arc<Edge>,
    pub root: PathBuf,
    running: Running,
}

pub struct SimIndexer {
    pub name: String,
    pub url: String,
    pub indexer: Arc<Indexer>,
    /// Observation only; indexers get no injected faults.
    pub edge: Arc<Edge>,
    running: Running,
}

/// A running simulated network. Dropping it leaves the tasks to die with
/// the runtime; call [`SimNet::shutdown`] to stop them explicitly.
pub struct SimNet {
    pub topology: Topology,
    pub indexers: Vec<SimIndexer>,
    pub servers: Vec<SimServer>,
    pub clock: Arc<ManualClock>,
    dir: tempfile::TempDir,
}

impl SimNet {
    /// Bind every node, write fixtures, start servers and indexers, then let
    /// each indexer crawl the servers registered with it.
    pub async fn spawn(topology: Topology) -> Result<Self, SimError> {
        topology.validate()?;
        let dir = tempfile::tempdir()?;

        let mut ix_listeners = Vec::new();
        let mut ix_urls = BTreeMap::new();
        for spec in &topology.indexers {
            let l = TcpListener::bind("127.0.0.1:0").await?;
            ix_urls.insert(spec.name.clone(), format!("http://{}", l.local_addr()?));
            ix_listeners.push(l);
        }

        let mut servers = Vec::new();
        for spec in &topology.servers {
            let listener = TcpListener::bind("127.0.0.1:0").await?;
            let url = format!("http://{}", listener.local_addr()?);
            let root = dir.path().join("servers").join(&spec.name);
            std::fs::create_dir_all(&root)?;
            for f in &spec.files {
                write_fixture(&root, topology.seed, f)?;
            }
            let mut cfg = ServeConfig::new(&root);
            cfg.name = spec.name.clone();
            cfg.max_concurrent = spec.max_concurrent;
            if let Some(ms) = spec.queue_timeout_ms {
                cfg.queue_timeout = Duration::from_millis(ms);
            }
            if let Some(ms) = spec.token_ttl_ms {
                cfg.token_ttl = Duration::from_millis(ms);
            }
            cfg.public_url = Some(url.clone());
            let server = FileServer::new(cfg)?;
            let edge = Arc::new(Edge {
                faults: Faults::from_spec(&spec.faults),
                stats: EdgeStats::default(),
            });
            let router = crate::server::http::router(server.clone()).layer(
                axum::middleware::from_fn_with_state(edge.clone(), edge::edge_layer),
            );
            servers.push(SimServer {
                name: spec.name.clone(),
                url,
                server,
                edge,
                root,
                running: Running::serve(listener, router),
            });
        }

        let clock = ManualClock::new(unix_now());
        let mut indexers = Vec::new();
        for (spec, listener) in topology.indexers.iter().zip(ix_listeners) {
            let url = ix_urls[&spec.name].clone();
            let mut cfg = IndexerConfig::new(&url, dir.path().join("indexers").join(&spec.name));
            cfg.name = spec.name.clone();
            cfg.peers = spec.peers.iter().map(|p| ix_urls[p].clone()).collect();
            cfg.upstreams = spec.upstreams.iter().map(|p| ix_urls[p].clone()).collect();
            if let Some(c) = spec.cutoff {
                cfg.cutoff = c;
            }
            let indexer = Indexer::open_with_clock(cfg, clock.clone())?;
            let edge = Arc::new(Edge::default());
            let router = crate::indexer::http::router(indexer.clone()).layer(
                axum::middleware::from_fn_with_state(edge.clone(), edge::edge_layer),
            );
            indexers.push(SimIndexer {
                name: spec.name.clone(),
                url,
                indexer,
                edge,
                running: Running::serve(listener, router),
            });
        }

        let net = Self {
            topology,
            indexers,
            servers,
            clock,
            dir,
        };
        for spec in &net.topology.servers {
            let url = net.server(&spec.name).url.clone();
            for ix in &net.indexers {
                let wanted = spec
                    .register_with
                    .as_ref()
                    .is_none_or(|names| names.contains(&ix.name));
                if wanted {
                    ix.indexer.register_server(&url).await?;
                }
            }
        }
        Ok(net)
    }

    pub fn server(&self, name: &str) -> &SimServer {
        self.servers
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no server named {name}"))
    }

    pub fn indexer(&self, name: &str) -> &SimIndexer {
        self.indexers
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no indexer named {name}"))
    }

    pub fn work_dir(&self) -> &Path {
        self.dir.path()
    }

    /// Content hash of a fixture file as generated for this network.
    pub fn hash_of(&self, path: &str) -> Option<ContentHash> {
        self.topology
            .servers
            .iter()
            .flat_map(|s| &s.files)
            .find(|f| f.path == path)
            .map(|f| fixture_hash(self.topology.seed, &f.path, f.size))
    }

    /// Client options pointed at the named indexers (all when empty), with
    /// scanning off.
    pub fn client_options(&self, indexers: &[&str]) -> ClientOptions {
        let urls = self
            .indexers
            .iter()
            .filter(|i| indexers.is_empty() || indexers.contains(&i.name.as_str()))
            .map(|i| i.url.clone())
            .collect();
        let mut opts = ClientOptions::new(urls);
        opts.scanner = ScannerHook::disabled();
        opts
    }

    /// Make a server unreachable: refuse new connections and fail requests
    /// on connections that are still open.
    pub async fn take_down(&mut self, name: &str) {
        let server = self
            .servers
            .iter_mut()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no server named {name}"));
        server.edge.faults.down.store(true, Ordering::SeqCst);
        server.running.stop().await;
    }

    pub fn advance_clock(&self, secs: i64) {
        self.clock.advance(secs);
    }

    /// Move time past every indexer's staleness window and run one
    /// maintenance round, so servers that stopped answering are evicted.
    /// Returns the number of attributions removed.
    pub async fn settle_eviction(&self) -> Result<u64, SimError> {
        let ttl = self
            .indexers
            .iter()
            .map(|i| i.indexer.config().stale_ttl_s())
            .max()
            .unwrap_or(0);
        self.clock.advance(ttl + 1);
        let mut removed = 0;
        for ix in &self.indexers {
            removed += ix.indexer.maintenance_round().await?;
        }
        Ok(removed)
    }

    pub async fn shutdown(mut self) {
        for s in &mut self.servers {
            s.running.stop().await;
        }
        for i in &mut self.indexers {
            i.running.stop().await;
        }
    }
}
