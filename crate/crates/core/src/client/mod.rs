//! Searching indexers, choosing a server and fetching files with end-to-end
//! hash verification.

pub mod config;
pub mod scanner;
pub mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use futures::StreamExt;
use rand::rngs::StdRng;
use rand::SeedableRng;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;

use crate::hash::{verify_file, ContentHash, HashError, VerificationOutcome};
use crate::http::{error_body, http_client_with_agent, normalize_url};
use crate::indexer::{merge_responses, search_remote};
use crate::scan::FileRecord;
use crate::wire::{
    self, SearchHit, SearchRequest, SearchResponse, ServerRef, TokenGrant, TokenRequest,
    WireMessage, API_PREFIX, USER_AGENT,
};
use config::{ClientConfig, SecurityMode};
use scanner::{ScanVerdict, ScannerHook};
use select::Measured;

pub const DEFAULT_HOP_BUDGET: u32 = 2;
pub const INDEXER_DEADLINE: Duration = Duration::from_secs(5);
/// How long the client will wait in a server's download queue.
pub const QUEUE_DEADLINE: Duration = Duration::from_secs(300);
pub const QUARANTINE_SUFFIX: &str = ".blocked";
/// Attempts per download: the first server plus one retry elsewhere.
pub const MAX_ATTEMPTS: usize = 2;

pub struct ClientOptions {
    pub indexers: Vec<String>,
    pub security_mode: SecurityMode,
    pub scanner: ScannerHook,
    pub hop_budget: u32,
    pub indexer_deadline: Duration,
    pub probe_timeout: Duration,
    pub queue_deadline: Duration,
    pub user_agent: Option<String>,
    /// Source address for outbound connections.
    pub local_address: Option<IpAddr>,
    /// Seed for tie-breaking between equally good servers.
    pub seed: Option<u64>,
}

impl ClientOptions {
    pub fn new(indexers: Vec<String>) -> Self {
        Self {
            indexers,
            security_mode: SecurityMode::Strict,
            scanner: ScannerHook {
                enabled: true,
                adapter: None,
            },
            hop_budget: DEFAULT_HOP_BUDGET,
            indexer_deadline: INDEXER_DEADLINE,
            probe_timeout: Duration::from_secs(5),
            queue_deadline: QUEUE_DEADLINE,
            user_agent: None,
            local_address: None,
            seed: None,
        }
    }

    pub fn from_config(config: &ClientConfig) -> Self {
        let mut opts = Self::new(config.indexer_urls());
        opts.security_mode = config.security_mode;
        opts.scanner = ScannerHook::from_settings(&config.scanner);
        opts.user_agent = config.user_agent.clone();
        opts
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("no indexers configured")]
    NoIndexers,
    #[error("no indexer reachable ({})", .0.join("; "))]
    NoIndexerReachable(Vec<String>),
    #[error("invalid search: {0}")]
    InvalidSearch(String),
    #[error("no server offers {0}")]
    NotFound(ContentHash),
    #[error("no server reachable for {hash} ({})", .failures.join("; "))]
    NoServerReachable {
        hash: ContentHash,
        failures: Vec<String>,
    },
    #[error("download declined")]
    Declined,
    #[error("{0} already exists")]
    OutputExists(PathBuf),
    #[error("{server}: {detail}")]
    Server { server: String, detail: String },
    #[error("{server}: queue wait exceeded (retry after {retry_after_s:?}s)")]
    Busy {
        server: String,
        retry_after_s: Option<u64>,
    },
    #[error("{server}: download token no longer valid")]
    Gone { server: String },
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchTarget {
    Text(String),
    Hash(ContentHash),
}

/// The same name resolving to different content on different indexers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyWarning {
    pub name: String,
    /// Each hash with the indexers that reported it.
    pub hashes: BTreeMap<ContentHash, BTreeSet<String>>,
}

impl std::fmt::Display for ConsistencyWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "'{}' maps to different hashes across indexers:",
            self.name
        )?;
        for (hash, ixs) in &self.hashes {
            let list: Vec<&str> = ixs.iter().map(String::as_str).collect();
            write!(f, " {hash} ({})", list.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub response: SearchResponse,
    pub warnings: Vec<ConsistencyWarning>,
    /// Indexers that failed, with the reason.
    pub unreachable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Blocked(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub server: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadReport {
    pub expected: ContentHash,
    pub actual: ContentHash,
    pub bytes: u64,
    pub output_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_path: Option<String>,
    pub server_used: String,
    pub verdict: Verdict,
    pub scanner: ScanVerdict,
    pub attempts: Vec<AttemptRecord>,
}

impl DownloadReport {
    pub fn is_verified(&self) -> bool {
        self.verdict == Verdict::Verified
    }
}

impl WireMessage for DownloadReport {
    const TYPE_NAME: &'static str = "DownloadReport";

    fn check(&self) -> Result<(), String> {
        match &self.verdict {
            Verdict::Verified if self.actual != self.expected => {
                Err("verified report with differing hashes".into())
            }
            Verdict::Verified if self.quarantine_path.is_some() => {
                Err("verified report must not name a quarantine path".into())
            }
            Verdict::Blocked(_) if self.quarantine_path.is_none() => {
                Err("blocked report must name a quarantine path".into())
            }
            _ => Ok(()),
        }
    }
}

/// Asked in Strict mode before any file bytes are requested.
pub trait Confirm: Send + Sync {
    fn confirm(&self, record: &FileRecord, server: &str) -> bool;
}

/// Accepts every download, as `--yes` does.
pub struct AutoConfirm;

impl Confirm for AutoConfirm {
    fn confirm(&self, _: &FileRecord, _: &str) -> bool {
        true
    }
}

impl<F: Fn(&FileRecord, &str) -> bool + Send + Sync> Confirm for F {
    fn confirm(&self, record: &FileRecord, server: &str) -> bool {
        self(record, server)
    }
}

pub struct Client {
    http: reqwest::Client,
    opts: ClientOptions,
    rng: Mutex<StdRng>,
}

enum Attempt {
    Done(DownloadReport),
    Mismatch(DownloadReport),
}

impl Client {
    pub fn new(opts: ClientOptions) -> Result<Self, ClientError> {
        let agent = opts.user_agent.as_deref().unwrap_or(USER_AGENT);
        let http = http_client_with_agent(agent, None, opts.local_address)?;
        let rng = match opts.seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        Ok(Self {
            http,
            opts,
            rng: Mutex::new(rng),
        })
    }

    pub fn options(&self) -> &ClientOptions {
        &self.opts
    }

    /// Query every configured indexer concurrently and merge by hash.
    pub async fn search(&self, target: &SearchTarget) -> Result<SearchOutcome, ClientError> {
        if self.opts.indexers.is_empty() {
            return Err(ClientError::NoIndexers);
        }
        let req = match target {
            SearchTarget::Text(q) => SearchRequest::by_text(q.clone(), self.opts.hop_budget),
            SearchTarget::Hash(h) => SearchRequest::by_hash(*h, self.opts.hop_budget),
        };
        req.check().map_err(ClientError::InvalidSearch)?;
        let deadline = self.opts.indexer_deadline;
        let calls = self.opts.indexers.iter().map(|ix| {
            let req = &req;
            async move {
                let result = match tokio::time::timeout(
                    deadline,
                    search_remote(&self.http, ix, req, deadline),
                )
                .await
                {
                    Ok(r) => r,
                    Err(_) => Err("deadline exceeded".to_string()),
                };
                (normalize_url(ix), result)
            }
        });
        let results = futures::future::join_all(calls).await;

        let mut ok = Vec::new();
        let mut unreachable = Vec::new();
        for (ix, r) in results {
            match r {
                Ok(resp) => ok.push((ix, resp)),
                Err(e) => {
                    tracing::warn!(indexer = %ix, "indexer failed: {e}");
                    unreachable.push(format!("{ix}: {e}"));
                }
            }
        }
        if ok.is_empty() {
            return Err(ClientError::NoIndexerReachable(unreachable));
        }
        let warnings = consistency_warnings(&ok);
        for w in &warnings {
            tracing::warn!("{w}");
        }
        let response = merge_responses(ok.into_iter().map(|(_, r)| r).collect());
        Ok(SearchOutcome {
            response,
            warnings,
            unreachable,
        })
    }

    /// Measure each source with a metadata request and pick one.
    pub async fn select_server(
        &self,
        hash: &ContentHash,
        sources: &[ServerRef],
    ) -> Result<ServerRef, ClientError> {
        let probes = sources.iter().map(|s| async move {
            let url = normalize_url(&s.url);
            let started = Instant::now();
            let r = self.metadata(&url, hash).await;
            (s, r.map(|_| started.elapsed().as_secs_f64() * 1000.0))
        });
        let results = futures::future::join_all(probes).await;
        let mut measured = Vec::new();
        let mut refs = Vec::new();
        let mut failures = Vec::new();
        for (s, r) in results {
            match r {
                Ok(latency_ms) => {
                    measured.push(Measured {
                        url: s.url.clone(),
                        latency_ms,
                        throughput_bps: s.throughput_bps,
                    });
                    refs.push(s);
                }
                Err(e) => failures.push(e.to_string()),
            }
        }
        let choice = {
            let mut rng = self.rng.lock().unwrap();
            select::pick(&measured, &mut *rng)
        };
        match choice {
            Some(i) => {
                let mut chosen = refs[i].clone();
                chosen.latency_ms = Some(measured[i].latency_ms);
                Ok(chosen)
            }
            None => Err(ClientError::NoServerReachable {
                hash: *hash,
                failures,
            }),
        }
    }

    /// Resolve `hash` through the indexers, then download it to `out`.
    pub async fn download(
        &self,
        hash: &ContentHash,
        out: &Path,
        confirm: &dyn Confirm,
    ) -> Result<DownloadReport, ClientError> {
        let found = self.search(&SearchTarget::Hash(*hash)).await?;
        let hit: Option<SearchHit> = found
            .response
            .hits
            .into_iter()
            .find(|h| h.record.hash == *hash);
        match hit {
            Some(hit) => self.download_from(hash, &hit.sources, out, confirm).await,
            None => Err(ClientError::NotFound(*hash)),
        }
    }

    /// Download `hash` from one of `sources`, verify it and place it at
    /// `out`. A copy that fails verification is quarantined next to `out`
    /// and the download is retried once on a different server.
    pub async fn download_from(
        &self,
        hash: &ContentHash,
        sources: &[ServerRef],
        out: &Path,
        confirm: &dyn Confirm,
    ) -> Result<DownloadReport, ClientError> {
        if out.exists() {
            return Err(ClientError::OutputExists(out.to_path_buf()));
        }
        let mut remaining: Vec<ServerRef> = sources.to_vec();
        let mut attempts: Vec<AttemptRecord> = Vec::new();
        let mut confirmed = false;
        let mut blocked: Option<DownloadReport> = None;
        let mut last_err: Option<ClientError> = None;

        for _ in 0..MAX_ATTEMPTS {
            if remaining.is_empty() {
                break;
            }
            let server = match self.select_server(hash, &remaining).await {
                Ok(s) => s,
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            };
            let url = normalize_url(&server.url);
            remaining.retain(|s| normalize_url(&s.url) != url);
            match self.attempt(&url, hash, out, &mut confirmed, confirm).await {
                Ok(Attempt::Done(mut report)) => {
                    attempts.push(AttemptRecord {
                        server: url,
                        outcome: outcome_label(&report),
                    });
                    report.attempts = attempts;
                    return Ok(report);
                }
                Ok(Attempt::Mismatch(report)) => {
                    tracing::warn!(server = %url, "hash mismatch; copy quarantined");
                    attempts.push(AttemptRecord {
                        server: url,
                        outcome: outcome_label(&report),
                    });
                    blocked = Some(report);
                }
                Err(ClientError::Declined) => return Err(ClientError::Declined),
                Err(e) => {
                    tracing::warn!(server = %url, "attempt failed: {e}");
                    attempts.push(AttemptRecord {
                        server: url,
                        outcome: e.to_string(),
                    });
                    last_err = Some(e);
                }
            }
        }
        if let Some(mut report) = blocked {
            report.attempts = attempts;
            return Ok(report);
        }
        Err(last_err.unwrap_or(ClientError::NotFound(*hash)))
    }

    /// A server's record for `hash`.
    pub async fn metadata(
        &self,
        server: &str,
        hash: &ContentHash,
    ) -> Result<FileRecord, ClientError> {
        let resp = self
            .http
            .get(format!("{server}{API_PREFIX}/meta/{hash}"))
            .timeout(self.opts.probe_timeout)
            .send()
            .await
            .map_err(|e| server_err(server, e))?;
        if !resp.status().is_success() {
            let body = error_body(resp).await;
            return Err(ClientError::Server {
                server: server.into(),
                detail: format!("{}: {}", body.error, body.detail),
            });
        }
        let text = resp.text().await.map_err(|e| server_err(server, e))?;
        let record: FileRecord = wire::decode(&text).map_err(|e| ClientError::Server {
            server: server.into(),
            detail: e.to_string(),
        })?;
        if record.hash != *hash {
            return Err(ClientError::Server {
                server: server.into(),
                detail: format!("metadata names {} instead of {hash}", record.hash),
            });
        }
        Ok(record)
    }

    async fn request_token(
        &self,
        server: &str,
        hash: &ContentHash,
    ) -> Result<TokenGrant, ClientError> {
        let body = wire::encode(&TokenRequest { hash: *hash }).expect("valid request");
        let resp = self
            .http
            .post(format!("{server}{API_PREFIX}/token"))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .timeout(self.opts.queue_deadline)
            .send()
            .await
            .map_err(|e| server_err(server, e))?;
        if resp.status() == StatusCode::SERVICE_UNAVAILABLE {
            let retry_after_s = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok());
            return Err(ClientError::Busy {
                server: server.into(),
                retry_after_s,
            });
        }
        if !resp.status().is_success() {
            let body = error_body(resp).await;
            return Err(ClientError::Server {
                server: server.into(),
                detail: format!("{}: {}", body.error, body.detail),
            });
        }
        let text = resp.text().await.map_err(|e| server_err(server, e))?;
        wire::decode(&text).map_err(|e| ClientError::Server {
            server: server.into(),
            detail: e.to_string(),
        })
    }

    async fn attempt(
        &self,
        server: &str,
        hash: &ContentHash,
        out: &Path,
        confirmed: &mut bool,
        confirm: &dyn Confirm,
    ) -> Result<Attempt, ClientError> {
        let record = self.metadata(server, hash).await?;
        if self.opts.security_mode == SecurityMode::Strict && !*confirmed {
            if !confirm.confirm(&record, server) {
                return Err(ClientError::Declined);
            }
            *confirmed = true;
        }
        let grant = self.request_token(server, hash).await?;

        let dir = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ClientError::Io { path, source }
        };
        let tmp = tempfile::Builder::new()
            .prefix(".distrifs-")
            .suffix(".part")
            .tempfile_in(&dir)
            .map_err(io_err(&dir))?;
        let (file, tmp_path) = tmp.into_parts();
        let bytes = self
            .stream_to(
                server,
                &grant.download_url,
                tokio::fs::File::from_std(file),
                &tmp_path,
            )
            .await?;

        let check_path = tmp_path.to_path_buf();
        let expected = *hash;
        let outcome = tokio::task::spawn_blocking(move || verify_file(&check_path, &expected))
            .await
            .expect("verify task panicked")?;
        let base = DownloadReport {
            expected: *hash,
            actual: *hash,
            bytes,
            output_path: out.display().to_string(),
            quarantine_path: None,
            server_used: server.into(),
            verdict: Verdict::Verified,
            scanner: ScanVerdict::Skipped("not scanned".into()),
            attempts: Vec::new(),
        };
        match outcome {
            VerificationOutcome::Match => {
                tmp_path.persist(out).map_err(|e| ClientError::Io {
                    path: out.to_path_buf(),
                    source: e.error,
                })?;
                let scan_target = out.to_path_buf();
                let hook = self.opts.scanner.clone();
                let verdict = tokio::task::spawn_blocking(move || hook.run(&scan_target))
                    .await
                    .expect("scanner task panicked");
                if let ScanVerdict::Flagged(detail) = &verdict {
                    tracing::warn!("scanner flagged {}: {detail}", out.display());
                    let q = quarantine_path(out);
                    std::fs::rename(out, &q).map_err(io_err(out))?;
                    return Ok(Attempt::Done(DownloadReport {
                        quarantine_path: Some(q.display().to_string()),
                        verdict: Verdict::Blocked("scanner".into()),
                        scanner: verdict,
                        ..base
                    }));
                }
                Ok(Attempt::Done(DownloadReport {
                    scanner: verdict,
                    ..base
                }))
            }
            VerificationOutcome::Mismatch { actual } => {
                let q = quarantine_path(out);
                tmp_path.persist(&q).map_err(|e| ClientError::Io {
                    path: q.clone(),
                    source: e.error,
                })?;
                Ok(Attempt::Mismatch(DownloadReport {
                    actual,
                    quarantine_path: Some(q.display().to_string()),
                    verdict: Verdict::Blocked("hash mismatch".into()),
                    scanner: ScanVerdict::Skipped("not scanned: hash mismatch".into()),
                    ..base
                }))
            }
        }
    }

    async fn stream_to(
        &self,
        server: &str,
        url: &str,
        mut file: tokio::fs::File,
        path: &Path,
    ) -> Result<u64, ClientError> {
        let resp = self
            .http
            .get(url)
            .send()
            .await
            .map_err(|e| server_err(server, e))?;
        match resp.status() {
            s if s.is_success() => {}
            StatusCode::GONE | StatusCode::NOT_FOUND => {
                return Err(ClientError::Gone {
                    server: server.into(),
                })
            }
            _ => {
                let body = error_body(resp).await;
                return Err(ClientError::Server {
                    server: server.into(),
                    detail: format!("{}: {}", body.error, body.detail),
                });
            }
        }
        let io = |source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut written = 0u64;
        let mut body = resp.bytes_stream();
        while let Some(chunk) = body.next().await {
            let chunk = chunk.map_err(|e| server_err(server, e))?;
            file.write_all(&chunk).await.map_err(io)?;
            written += chunk.len() as u64;
        }
        file.flush().await.map_err(io)?;
        file.sync_all().await.map_err(io)?;
        Ok(written)
    }
}

/// `<out>.blocked`
pub fn quarantine_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(QUARANTINE_SUFFIX);
    PathBuf::from(s)
}

/// Check a local file against an expected hash.
pub fn verify(path: &Path, expected: &ContentHash) -> Result<VerificationOutcome, HashError> {
    verify_file(path, expected)
}

fn server_err(server: &str, e: reqwest::Error) -> ClientError {
    ClientError::Server {
        server: server.into(),
        detail: e.to_string(),
    }
}

fn outcome_label(report: &DownloadReport) -> String {
    match &report.verdict {
        Verdict::Verified => "verified".into(),
        Verdict::Blocked(r) => format!("blocked: {r}"),
    }
}

/// Names reported with more than one hash by more than one indexer.
fn consistency_warnings(results: &[(String, SearchResponse)]) -> Vec<ConsistencyWarning> {
    let mut by_name: BTreeMap<&str, BTreeMap<ContentHash, BTreeSet<String>>> = BTreeMap::new();
    for (ix, resp) in results {
        for hit in &resp.hits {
            by_name
                .entry(hit.record.name.as_str())
                .or_default()
                .entry(hit.record.hash)
                .or_default()
                .insert(ix.clone());
        }
    }
    by_name
        .into_iter()
        .filter(|(_, hashes)| {
            let indexers: BTreeSet<&String> = hashes.values().flatten().collect();
            hashes.len() > 1 && indexers.len() > 1
        })
        .map(|(name, hashes)| ConsistencyWarning {
            name: name.to_string(),
            hashes,
        })
        .collect()
}
