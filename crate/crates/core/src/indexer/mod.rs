//! The discovery service.
//!
//! An indexer crawls servers' file listings, keeps a persistent
//! hash → servers index (metadata only, never file bodies), answers search
//! queries, forwards misses to peer indexers and pushes what it learns to
//! upstream indexers.
//!
//! Storage layout in the [`LogStore`](store::LogStore):
//!
//! | key                        | value         |
//! |----------------------------|---------------|
//! | `e/{hash}`                 | `IndexEntry`  |
//! | `s/{sha256(url)}`          | `ServerEntry` |
//! | `n/{name token}/{hash}`    | empty         |
//! | `m/{sha256(url)}/{hash}`   | empty         |
//!
//! `m/` records which hashes are attributed to which server so re-crawls and
//! eviction touch only that server's records.

pub mod http;
pub mod store;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures::future::join_all;
use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::hash::ContentHash;
use crate::http::{error_body, http_client, normalize_url};
use crate::scan::FileRecord;
use crate::wire::{
    self, tokenize, CrawlResult, FileList, PeerRef, SearchHit, SearchRequest, SearchResponse,
    ServerRef, SyncBatch, SyncRecord, TokenGrant, TokenRequest, API_PREFIX, HEADER_HOPS,
    HEADER_VISITED, SYNC_BATCH_CAP,
};
use store::{LogStore, StoreError, WriteBatch};

pub const DEFAULT_CUTOFF: usize = 100_000;
pub const DEFAULT_CACHE_CAPACITY: usize = 10_000;
pub const DEFAULT_CRAWL_INTERVAL: Duration = Duration::from_secs(15 * 60);
pub const DEFAULT_PEER_TIMEOUT: Duration = Duration::from_secs(5);
pub const SEARCH_HIT_CAP: usize = 100;
/// Smoothing factor for probe measurements.
pub const EWMA_ALPHA: f64 = 0.3;
const MAX_ALT_NAMES: usize = 16;
const PROBE_SAMPLE_BYTES: usize = 64 * 1024;
const PROBE_MAX_FILE: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct IndexerConfig {
    pub name: String,
    /// The address other indexers and clients use to reach this one; also
    /// its identity in federation `visited` lists.
    pub public_url: String,
    pub db_path: PathBuf,
    pub peers: Vec<String>,
    pub upstreams: Vec<String>,
    pub cutoff: usize,
    pub crawl_interval: Duration,
    /// A server is stale after this many crawl intervals without a
    /// successful crawl.
    pub stale_after_missed: u32,
    pub peer_timeout: Duration,
    pub crawl_timeout: Duration,
    pub cache_capacity: usize,
}

impl IndexerConfig {
    pub fn new(public_url: impl Into<String>, db_path: impl Into<PathBuf>) -> Self {
        Self {
            name: "distrifs-indexer".into(),
            public_url: public_url.into(),
            db_path: db_path.into(),
            peers: Vec::new(),
            upstreams: Vec::new(),
            cutoff: DEFAULT_CUTOFF,
            crawl_interval: DEFAULT_CRAWL_INTERVAL,
            stale_after_missed: 3,
            peer_timeout: DEFAULT_PEER_TIMEOUT,
            crawl_timeout: Duration::from_secs(30),
            cache_capacity: DEFAULT_CACHE_CAPACITY,
        }
    }

    pub fn stale_ttl_s(&self) -> i64 {
        (self.crawl_interval.as_secs() as i64).max(1) * self.stale_after_missed.max(1) as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEntry {
    pub url: String,
    pub first_seen_unix_s: i64,
    pub last_crawl_unix_s: i64,
    pub file_count: u64,
    pub reachable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_probed_unix_s: Option<i64>,
}

impl ServerEntry {
    fn new(url: &str, now: i64) -> Self {
        Self {
            url: url.to_string(),
            first_seen_unix_s: now,
            last_crawl_unix_s: now,
            file_count: 0,
            reachable: true,
            latency_ms: None,
            throughput_bps: None,
            last_probed_unix_s: None,
        }
    }

    fn as_ref(&self) -> ServerRef {
        ServerRef {
            url: self.url.clone(),
            latency_ms: self.latency_ms,
            throughput_bps: self.throughput_bps,
            last_probed_unix_s: self.last_probed_unix_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub hash: ContentHash,
    /// Metadata as first reported.
    pub record: FileRecord,
    pub servers: BTreeSet<String>,
    /// Names other sources reported for the same content.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub latency_ms: f64,
    pub throughput_bps: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexerError {
    #[error("server {url} unreachable: {detail}")]
    Unreachable { url: String, detail: String },
    #[error("server {url} returned a malformed listing: {detail}")]
    MalformedListing { url: String, detail: String },
    #[error("sync batch holds {0} records; cap is {SYNC_BATCH_CAP}")]
    OversizedBatch(usize),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("server {0} is not registered")]
    NotRegistered(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

/// New (EWMA) value after observing `sample`.
pub fn ewma(previous: Option<f64>, sample: f64) -> f64 {
    match previous {
        Some(prev) => EWMA_ALPHA * sample + (1.0 - EWMA_ALPHA) * prev,
        None => sample,
    }
}

fn url_digest(url: &str) -> String {
    ContentHash::of(url.as_bytes()).to_hex()
}

fn entry_key(hash: &ContentHash) -> String {
    format!("e/{hash}")
}

fn server_key(url: &str) -> String {
    format!("s/{}", url_digest(url))
}

fn member_prefix(url: &str) -> String {
    format!("m/{}/", url_digest(url))
}

fn posting_key(token: &str, hash: &ContentHash) -> String {
    format!("n/{token}/{hash}")
}

pub struct Indexer {
    config: IndexerConfig,
    id: String,
    peers: Vec<PeerRef>,
    store: LogStore,
    cache: Mutex<LruCache<ContentHash, Arc<IndexEntry>>>,
    writer: Mutex<()>,
    http: reqwest::Client,
    clock: Arc<dyn Clock>,
}

impl Indexer {
    pub fn open(config: IndexerConfig) -> Result<Arc<Self>, IndexerError> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        config: IndexerConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, IndexerError> {
        let store = LogStore::open(&config.db_path)?;
        let id = normalize_url(&config.public_url);
        let mut peers: Vec<PeerRef> = Vec::new();
        for (list, is_upstream) in [(&config.upstreams, true), (&config.peers, false)] {
            for raw in list {
                let url = normalize_url(raw);
                if url == id || peers.iter().any(|p| p.url == url) {
                    continue;
                }
                wire::parse_http_url(&url).map_err(IndexerError::Invalid)?;
                peers.push(PeerRef { url, is_upstream });
            }
        }
        let capacity = NonZeroUsize::new(config.cache_capacity.max(1)).unwrap();
        Ok(Arc::new(Self {
            http: http_client(None, None)?,
            cache: Mutex::new(LruCache::new(capacity)),
            writer: Mutex::new(()),
            id,
            peers,
            store,
            config,
            clock,
        }))
    }

    pub fn config(&self) -> &IndexerConfig {
        &self.config
    }

    /// This indexer's identity (normalized public URL).
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn peers(&self) -> &[PeerRef] {
        &self.peers
    }

    pub fn entry_count(&self) -> u64 {
        self.store.count_prefix("e/") as u64
    }

    pub fn store_size_bytes(&self) -> u64 {
        self.store.disk_size()
    }

    pub fn entry(&self, hash: &ContentHash) -> Option<Arc<IndexEntry>> {
        let mut cache = self.cache.lock().unwrap();
        if let Some(e) = cache.get(hash) {
            return Some(e.clone());
        }
        let raw = self.store.get(&entry_key(hash))?;
        let entry: Arc<IndexEntry> = Arc::new(serde_json::from_slice(&raw).ok()?);
        cache.put(*hash, entry.clone());
        Some(entry)
    }

    pub fn server(&self, url: &str) -> Option<ServerEntry> {
        let raw = self.store.get(&server_key(&normalize_url(url)))?;
        serde_json::from_slice(&raw).ok()
    }

    pub fn servers(&self) -> Vec<ServerEntry> {
        self.store
            .scan_prefix("s/")
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_slice(&v).ok())
            .collect()
    }

    /// Hashes currently attributed to `url`.
    pub fn hashes_for_server(&self, url: &str) -> Vec<ContentHash> {
        let prefix = member_prefix(&normalize_url(url));
        self.store
            .keys_with_prefix(&prefix)
            .into_iter()
            .filter_map(|k| k[prefix.len()..].parse().ok())
            .collect()
    }

    fn hit_for(&self, entry: &IndexEntry) -> SearchHit {
        let sources = entry
            .servers
            .iter()
            .map(|url| {
                self.server(url)
                    .map(|s| s.as_ref())
                    .unwrap_or_else(|| ServerRef::unmeasured(url.clone()))
            })
            .collect();
        SearchHit {
            record: entry.record.clone(),
            sources,
            alt_names: entry.alt_names.clone(),
        }
    }

    /// Answer from the local store only.
    pub fn search_local(&self, request: &SearchRequest) -> SearchResponse {
        if let Some(hash) = &request.hash {
            return match self.entry(hash) {
                Some(e) => SearchResponse {
                    hits: vec![self.hit_for(&e)],
                    truncated: false,
                },
                None => SearchResponse::empty(),
            };
        }
        let Some(query) = &request.query else {
            return SearchResponse::empty();
        };
        let tokens = tokenize(query);
        let Some(first) = tokens.first() else {
            return SearchResponse::empty();
        };
        // candidates: any posting whose name token contains the first query token
        let mut candidates = BTreeSet::new();
        for key in self.store.keys_with_prefix("n/") {
            let mut parts = key[2..].splitn(2, '/');
            let (Some(tok), Some(hash)) = (parts.next(), parts.next()) else {
                continue;
            };
            if tok.contains(first.as_str()) {
                if let Ok(h) = hash.parse::<ContentHash>() {
                    candidates.insert(h);
                }
            }
        }
        let mut hits: Vec<SearchHit> = candidates
            .into_iter()
            .filter_map(|h| self.entry(&h))
            .filter(|e| entry_matches(e, &tokens))
            .map(|e| self.hit_for(&e))
            .collect();
        hits.sort_by(|a, b| {
            (&a.record.name, &a.record.hash).cmp(&(&b.record.name, &b.record.hash))
        });
        let truncated = hits.len() > SEARCH_HIT_CAP;
        hits.truncate(SEARCH_HIT_CAP);
        SearchResponse { hits, truncated }
    }

    /// Local search, falling back to peers when nothing is found locally.
    pub async fn search_federated(&self, request: &SearchRequest) -> SearchResponse {
        let local = self.search_local(request);
        if !local.hits.is_empty() || request.hop_budget == 0 {
            return local;
        }
        let mut visited = request.visited.clone();
        visited.push(self.id.clone());
        let forward = SearchRequest {
            query: request.query.clone(),
            hash: request.hash,
            hop_budget: request.hop_budget - 1,
            visited,
        };
        let targets: Vec<&PeerRef> = self
            .peers
            .iter()
            .filter(|p| !request.visited.iter().any(|v| normalize_url(v) == p.url))
            .collect();
        let responses = join_all(targets.iter().map(|p| self.query_peer(&p.url, &forward))).await;
        let mut ok = Vec::new();
        for (peer, resp) in targets.iter().zip(responses) {
            match resp {
                Ok(r) => ok.push(r),
                Err(e) => tracing::warn!(peer = %peer.url, error = %e, "peer skipped"),
            }
        }
        merge_responses(ok)
    }

    async fn query_peer(
        &self,
        peer: &str,
        request: &SearchRequest,
    ) -> Result<SearchResponse, String> {
        search_remote(&self.http, peer, request, self.config.peer_timeout).await
    }

    /// Crawl `url`'s listing and index up to the cutoff.
    pub async fn register_server(&self, url: &str) -> Result<CrawlResult, IndexerError> {
        let url = normalize_url(url);
        wire::parse_http_url(&url).map_err(IndexerError::Invalid)?;
        let listing = match self.fetch_listing(&url).await {
            Ok(l) => l,
            Err(e) => {
                if let IndexerError::Unreachable { .. } = e {
                    self.mark_unreachable(&url)?;
                }
                tracing::warn!(server = %url, error = %e, "crawl failed");
                return Err(e);
            }
        };
        let result = self.apply_crawl(&url, listing)?;
        tracing::info!(
            server = %url,
            files = result.files_indexed,
            truncated = result.truncated,
            "crawled"
        );
        if !self.peers.iter().any(|p| p.is_upstream) {
            return Ok(result);
        }
        if let Err(e) = self.push_upstream(&url).await {
            tracing::warn!(error = %e, "upstream push incomplete");
        }
        Ok(result)
    }

    async fn fetch_listing(&self, url: &str) -> Result<Vec<FileRecord>, IndexerError> {
        let unreachable = |detail: String| IndexerError::Unreachable {
            url: url.to_string(),
            detail,
        };
        let resp = self
            .http
            .get(format!("{url}{API_PREFIX}/list"))
            .timeout(self.config.crawl_timeout)
            .send()
            .await
            .map_err(|e| unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreachable(format!("status {}", resp.status())));
        }
        let text = resp.text().await.map_err(|e| unreachable(e.to_string()))?;
        wire::decode::<FileList>(&text)
            .map(|l| l.0)
            .map_err(|e| IndexerError::MalformedListing {
                url: url.to_string(),
                detail: e.to_string(),
            })
    }

    fn mark_unreachable(&self, url: &str) -> Result<(), IndexerError> {
        let _w = self.writer.lock().unwrap();
        let now = self.clock.now_unix_s();
        let mut entry = self.server(url).unwrap_or_else(|| {
            let mut e = ServerEntry::new(url, now);
            // never crawled successfully
            e.last_crawl_unix_s = 0;
            e
        });
        entry.reachable = false;
        let mut batch = WriteBatch::new();
        batch.put(server_key(url), serde_json::to_vec(&entry).unwrap());
        self.store.apply(batch)?;
        Ok(())
    }

    /// Replace `url`'s attributed records with `listing` (first CUTOFF
    /// distinct hashes) in one atomic batch.
    pub fn apply_crawl(
        &self,
        url: &str,
        listing: Vec<FileRecord>,
    ) -> Result<CrawlResult, IndexerError> {
        let url = normalize_url(url);
        let mut seen = HashSet::new();
        let distinct: Vec<FileRecord> = listing
            .into_iter()
            .filter(|r| seen.insert(r.hash))
            .collect();
        let truncated = distinct.len() > self.config.cutoff;
        let keep = &distinct[..distinct.len().min(self.config.cutoff)];

        let _w = self.writer.lock().unwrap();
        let now = self.clock.now_unix_s();
        let mut txn = Txn::new(self);
        let keep_set: HashSet<ContentHash> = keep.iter().map(|r| r.hash).collect();
        for old in self.hashes_for_server(&url) {
            if !keep_set.contains(&old) {
                txn.detach(&url, &old);
            }
        }
        for rec in keep {
            txn.attach(&url, rec);
        }
        let mut server = self
            .server(&url)
            .unwrap_or_else(|| ServerEntry::new(&url, now));
        server.file_count = keep.len() as u64;
        server.last_crawl_unix_s = now;
        server.reachable = true;
        txn.servers.insert(url.clone(), server);
        txn.commit()?;
        Ok(CrawlResult {
            files_indexed: keep.len() as u64,
            truncated,
        })
    }

    /// Merge records pushed by another indexer. Returns how many were
    /// accepted (already-known pairs count as accepted).
    pub fn sync_push(&self, batch: &SyncBatch) -> Result<u64, IndexerError> {
        if batch.records.len() > SYNC_BATCH_CAP {
            return Err(IndexerError::OversizedBatch(batch.records.len()));
        }
        wire::WireMessage::check(batch).map_err(IndexerError::Invalid)?;
        let _w = self.writer.lock().unwrap();
        let now = self.clock.now_unix_s();
        let mut txn = Txn::new(self);
        let mut accepted = 0;
        for SyncRecord { record, server_url } in &batch.records {
            let url = normalize_url(server_url);
            if txn
                .entry(&record.hash)
                .is_some_and(|e| e.servers.contains(&url))
            {
                accepted += 1;
                continue;
            }
            let mut server = match txn.servers.get(&url) {
                Some(s) => s.clone(),
                None => self
                    .server(&url)
                    .unwrap_or_else(|| ServerEntry::new(&url, now)),
            };
            if server.file_count >= self.config.cutoff as u64 {
                continue;
            }
            txn.attach(&url, record);
            server.file_count += 1;
            txn.servers.insert(url, server);
            accepted += 1;
        }
        txn.commit()?;
        tracing::info!(origin = %batch.origin, accepted, "sync batch merged");
        Ok(accepted)
    }

    /// Push every record attributed to `server_url` to each upstream.
    pub async fn push_upstream(&self, server_url: &str) -> Result<u64, IndexerError> {
        let url = normalize_url(server_url);
        let records: Vec<SyncRecord> = self
            .hashes_for_server(&url)
            .iter()
            .filter_map(|h| self.entry(h))
            .map(|e| SyncRecord {
                record: e.record.clone(),
                server_url: url.clone(),
            })
            .collect();
        let mut pushed = 0;
        for upstream in self.peers.iter().filter(|p| p.is_upstream) {
            for chunk in records.chunks(SYNC_BATCH_CAP) {
                let batch = SyncBatch {
                    origin: self.id.clone(),
                    records: chunk.to_vec(),
                };
                let body =
                    wire::encode(&batch).map_err(|e| IndexerError::Invalid(e.to_string()))?;
                let resp = self
                    .http
                    .post(format!("{}{API_PREFIX}/sync", upstream.url))
                    .header(reqwest::header::CONTENT_TYPE, "application/json")
                    .timeout(self.config.crawl_timeout)
                    .body(body)
                    .send()
                    .await?;
                if !resp.status().is_success() {
                    let err = error_body(resp).await;
                    return Err(IndexerError::Invalid(format!(
                        "upstream {} refused sync: {}",
                        upstream.url, err.detail
                    )));
                }
                pushed += chunk.len() as u64;
            }
        }
        Ok(pushed)
    }

    /// Measure round-trip latency and download throughput of a registered
    /// server, folding both into its stored moving averages.
    pub async fn probe_server(&self, url: &str) -> Result<ProbeResult, IndexerError> {
        let url = normalize_url(url);
        if self.server(&url).is_none() {
            return Err(IndexerError::NotRegistered(url));
        }
        let started = Instant::now();
        let info = self
            .http
            .get(format!("{url}{API_PREFIX}/info"))
            .timeout(self.config.peer_timeout)
            .send()
            .await
            .and_then(|r| r.error_for_status());
        let latency = match info {
            Ok(resp) => {
                let _ = resp.bytes().await;
                started.elapsed().as_secs_f64() * 1000.0
            }
            Err(e) => {
                self.mark_unreachable(&url)?;
                return Err(IndexerError::Unreachable {
                    url,
                    detail: e.to_string(),
                });
            }
        };
        let throughput = self.sample_throughput(&url).await;

        let _w = self.writer.lock().unwrap();
        let Some(mut entry) = self.server(&url) else {
            return Err(IndexerError::NotRegistered(url));
        };
        entry.latency_ms = Some(ewma(entry.latency_ms, latency));
        if let Some(t) = throughput {
            entry.throughput_bps = Some(ewma(entry.throughput_bps, t));
        }
        entry.last_probed_unix_s = Some(self.clock.now_unix_s());
        entry.reachable = true;
        let result = ProbeResult {
            latency_ms: entry.latency_ms.unwrap_or(latency),
            throughput_bps: entry.throughput_bps,
        };
        let mut batch = WriteBatch::new();
        batch.put(server_key(&url), serde_json::to_vec(&entry).unwrap());
        self.store.apply(batch)?;
        Ok(result)
    }

    /// Bits per second observed reading up to 64 KiB of the smallest hosted
    /// file no larger than 1 MiB, via a regular token download.
    async fn sample_throughput(&self, url: &str) -> Option<f64> {
        let smallest = self
            .hashes_for_server(url)
            .iter()
            .filter_map(|h| self.entry(h))
            .filter(|e| e.record.size_bytes > 0 && e.record.size_bytes <= PROBE_MAX_FILE)
            .min_by_key(|e| e.record.size_bytes)?;
        let timeout = self.config.peer_timeout;
        let body = wire::encode(&TokenRequest {
            hash: smallest.hash,
        })
        .ok()?;
        let resp = self
            .http
            .post(format!("{url}{API_PREFIX}/token"))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .timeout(timeout)
            .body(body)
            .send()
            .await
            .ok()?
            .error_for_status()
            .ok()?;
        let grant: TokenGrant = wire::decode(&resp.text().await.ok()?).ok()?;
        let started = Instant::now();
        let mut resp = self
            .http
            .get(&grant.download_url)
            .timeout(timeout)
            .send()
            .await
            .ok()?
            .error_for_status()
            .ok()?;
        let mut read = 0usize;
        while read < PROBE_SAMPLE_BYTES {
            match resp.chunk().await {
                Ok(Some(chunk)) => read += chunk.len(),
                _ => break,
            }
        }
        let secs = started.elapsed().as_secs_f64().max(1e-6);
        (read > 0).then(|| read as f64 * 8.0 / secs)
    }

    /// Drop attributions of servers with no successful crawl within the
    /// stale TTL. Returns the number of (hash, server) attributions removed.
    pub fn evict_stale(&self) -> Result<u64, IndexerError> {
        let _w = self.writer.lock().unwrap();
        let cutoff_time = self.clock.now_unix_s() - self.config.stale_ttl_s();
        let mut txn = Txn::new(self);
        let mut removed = 0;
        for mut server in self.servers() {
            if server.last_crawl_unix_s >= cutoff_time {
                continue;
            }
            let hashes = self.hashes_for_server(&server.url);
            if hashes.is_empty() && !server.reachable {
                continue;
            }
            for h in &hashes {
                txn.detach(&server.url, h);
            }
            removed += hashes.len() as u64;
            server.reachable = false;
            server.file_count = 0;
            tracing::info!(server = %server.url, records = hashes.len(), "evicted stale server");
            txn.servers.insert(server.url.clone(), server);
        }
        txn.commit()?;
        Ok(removed)
    }

    /// Re-crawl every known server; failures are recorded, not returned.
    pub async fn recrawl_all(&self) -> usize {
        let mut ok = 0;
        for server in self.servers() {
            if self.register_server(&server.url).await.is_ok() {
                ok += 1;
            }
        }
        ok
    }

    pub async fn probe_all(&self) {
        for server in self.servers().into_iter().filter(|s| s.reachable) {
            let _ = self.probe_server(&server.url).await;
        }
    }

    /// One maintenance round: re-crawl, probe, evict.
    pub async fn maintenance_round(&self) -> Result<u64, IndexerError> {
        self.recrawl_all().await;
        self.probe_all().await;
        self.evict_stale()
    }

    /// Run [`maintenance_round`](Self::maintenance_round) every crawl
    /// interval until the handle is aborted.
    pub fn spawn_scheduler(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let ix = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(ix.config.crawl_interval);
            tick.tick().await;
            loop {
                tick.tick().await;
                if let Err(e) = ix.maintenance_round().await {
                    tracing::warn!(error = %e, "maintenance round failed");
                }
            }
        })
    }
}

fn entry_matches(entry: &IndexEntry, query_tokens: &[String]) -> bool {
    let name_tokens: Vec<String> = std::iter::once(&entry.record.name)
        .chain(entry.alt_names.iter())
        .flat_map(|n| tokenize(n))
        .collect();
    query_tokens
        .iter()
        .all(|q| name_tokens.iter().any(|t| t.contains(q.as_str())))
}

/// Merge responses: one hit per hash, sources unioned by URL.
pub fn merge_responses(responses: Vec<SearchResponse>) -> SearchResponse {
    let mut order: Vec<ContentHash> = Vec::new();
    let mut by_hash: HashMap<ContentHash, SearchHit> = HashMap::new();
    let mut truncated = false;
    for resp in responses {
        truncated |= resp.truncated;
        for hit in resp.hits {
            match by_hash.get_mut(&hit.record.hash) {
                Some(existing) => {
                    for s in hit.sources {
                        if !existing.sources.iter().any(|e| e.url == s.url) {
                            existing.sources.push(s);
                        }
                    }
                    for n in std::iter::once(hit.record.name).chain(hit.alt_names) {
                        if n != existing.record.name && !existing.alt_names.contains(&n) {
                            existing.alt_names.push(n);
                        }
                    }
                }
                None => {
                    order.push(hit.record.hash);
                    by_hash.insert(hit.record.hash, hit);
                }
            }
        }
    }
    let mut hits: Vec<SearchHit> = order
        .into_iter()
        .filter_map(|h| by_hash.remove(&h))
        .collect();
    if hits.len() > SEARCH_HIT_CAP {
        hits.truncate(SEARCH_HIT_CAP);
        truncated = true;
    }
    SearchResponse { hits, truncated }
}

/// Issue a search against a remote indexer's HTTP API.
pub async fn search_remote(
    http: &reqwest::Client,
    indexer: &str,
    request: &SearchRequest,
    timeout: Duration,
) -> Result<SearchResponse, String> {
    let mut req = http
        .get(format!("{}{API_PREFIX}/search", normalize_url(indexer)))
        .timeout(timeout)
        .header(HEADER_HOPS, request.hop_budget.to_string());
    if !request.visited.is_empty() {
        req = req.header(HEADER_VISITED, request.visited.join(","));
    }
    req = match (&request.query, &request.hash) {
        (_, Some(h)) => req.query(&[("hash", h.to_hex())]),
        (Some(q), None) => req.query(&[("q", q.as_str())]),
        (None, None) => return Err("empty search request".into()),
    };
    let resp = req.send().await.map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        let err = error_body(resp).await;
        return Err(format!("{}: {}", err.error, err.detail));
    }
    let text = resp.text().await.map_err(|e| e.to_string())?;
    wire::decode(&text).map_err(|e| e.to_string())
}

/// Read-modify-write overlay; flushed as one store batch.
struct Txn<'a> {
    ix: &'a Indexer,
    entries: HashMap<ContentHash, Option<IndexEntry>>,
    servers: HashMap<String, ServerEntry>,
    batch: WriteBatch,
}

impl<'a> Txn<'a> {
    fn new(ix: &'a Indexer) -> Self {
        Self {
            ix,
            entries: HashMap::new(),
            servers: HashMap::new(),
            batch: WriteBatch::new(),
        }
    }

    fn entry(&mut self, hash: &ContentHash) -> Option<IndexEntry> {
        if let Some(e) = self.entries.get(hash) {
            return e.clone();
        }
        self.ix.entry(hash).map(|e| (*e).clone())
    }

    fn put_postings(&mut self, name: &str, hash: &ContentHash) {
        for tok in tokenize(name) {
            self.batch.put(posting_key(&tok, hash), Vec::new());
        }
    }

    fn attach(&mut self, url: &str, record: &FileRecord) {
        let mut entry = match self.entry(&record.hash) {
            Some(e) => e,
            None => {
                self.put_postings(&record.name, &record.hash);
                IndexEntry {
                    hash: record.hash,
                    record: record.clone(),
                    servers: BTreeSet::new(),
                    alt_names: Vec::new(),
                }
            }
        };
        if record.name != entry.record.name
            && !entry.alt_names.contains(&record.name)
            && entry.alt_names.len() < MAX_ALT_NAMES
        {
            tracing::debug!(hash = %record.hash, "conflicting name for known content");
            entry.alt_names.push(record.name.clone());
            self.put_postings(&record.name, &record.hash);
        }
        entry.servers.insert(url.to_string());
        self.batch
            .put(format!("{}{}", member_prefix(url), record.hash), Vec::new());
        self.entries.insert(record.hash, Some(entry));
    }

    fn detach(&mut self, url: &str, hash: &ContentHash) {
        self.batch.delete(format!("{}{}", member_prefix(url), hash));
        let Some(mut entry) = self.entry(hash) else {
            return;
        };
        entry.servers.remove(url);
        if entry.servers.is_empty() {
            for name in std::iter::once(&entry.record.name).chain(entry.alt_names.iter()) {
                for tok in tokenize(name) {
                    self.batch.delete(posting_key(&tok, hash));
                }
            }
            self.entries.insert(*hash, None);
        } else {
            self.entries.insert(*hash, Some(entry));
        }
    }

    fn commit(mut self) -> Result<(), IndexerError> {
        for (hash, entry) in &self.entries {
            match entry {
                Some(e) => self
                    .batch
                    .put(entry_key(hash), serde_json::to_vec(e).unwrap()),
                None => self.batch.delete(entry_key(hash)),
            }
        }
        for (url, server) in &self.servers {
            self.batch
                .put(server_key(url), serde_json::to_vec(server).unwrap());
        }
        self.ix.store.apply(std::mem::take(&mut self.batch))?;
        let mut cache = self.ix.cache.lock().unwrap();
        for hash in self.entries.keys() {
            cache.pop(hash);
        }
        Ok(())
    }
}
