//! JSON message schemas shared by clients, indexers and servers.
//!
//! Every message type implements [`WireMessage`]. [`encode`] validates the
//! message and renders canonical JSON: keys sorted lexicographically, absent
//! optional fields omitted, no insignificant whitespace. Encoding the same
//! message twice always yields the same bytes. [`decode`] ignores unknown keys
//! and classifies failures as parse, schema or validation errors.
//!
//! No message ever carries file content; bytes travel only on `/dl/{token}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use crate::hash::{ContentHash, INVALID_HASH_MARKER};
use crate::scan::FileRecord;

pub const API_PREFIX: &str = "/api/v1";
pub const PROTOCOL_VERSION: &str = "1.0";
/// The only User-Agent any DistriFS component sends.
pub const USER_AGENT: &str = "DistriFS/1.0";
pub const MAX_HOP_BUDGET: u32 = 8;
pub const SYNC_BATCH_CAP: usize = 1000;

pub const HEADER_HOPS: &str = "x-distrifs-hops";
pub const HEADER_VISITED: &str = "x-distrifs-visited";
pub const HEADER_HASH: &str = "x-distrifs-hash";
pub const HEADER_NAME: &str = "x-distrifs-name";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("{ty}: invariant violated: {rule}")]
    Invariant { ty: &'static str, rule: String },
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("schema error{}: {detail}", field.as_ref().map(|f| format!(" in field `{f}`")).unwrap_or_default())]
    Schema {
        field: Option<String>,
        detail: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown wire type {0:?}")]
    UnknownType(String),
}

impl WireError {
    /// Machine-readable code used in error response bodies.
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Invariant { .. } | WireError::Validation(_) => "validation",
            WireError::Parse(_) => "parse",
            WireError::Schema { .. } => "schema",
            WireError::UnknownType(_) => "unknown_type",
        }
    }
}

pub trait WireMessage: Serialize + DeserializeOwned {
    const TYPE_NAME: &'static str;

    /// Check type invariants, returning the violated rule.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

pub fn encode<T: WireMessage>(message: &T) -> Result<String, WireError> {
    message.check().map_err(|rule| WireError::Invariant {
        ty: T::TYPE_NAME,
        rule,
    })?;
    let value = serde_json::to_value(message).map_err(|e| WireError::Invariant {
        ty: T::TYPE_NAME,
        rule: e.to_string(),
    })?;
    Ok(canonical_json(&value))
}

pub fn decode<T: WireMessage>(text: &str) -> Result<T, WireError> {
    let message: T = serde_json::from_str(text).map_err(classify)?;
    message
        .check()
        .map_err(|rule| WireError::Validation(format!("{}: {rule}", T::TYPE_NAME)))?;
    Ok(message)
}

fn classify(e: serde_json::Error) -> WireError {
    use serde_json::error::Category;
    let msg = e.to_string();
    match e.classify() {
        Category::Syntax | Category::Eof | Category::Io => WireError::Parse(msg),
        Category::Data => {
            if msg.contains(INVALID_HASH_MARKER) {
                WireError::Validation(msg)
            } else {
                let field = msg
                    .strip_prefix("missing field `")
                    .and_then(|rest| rest.split('`').next())
                    .map(str::to_string);
                WireError::Schema { field, detail: msg }
            }
        }
    }
}

/// Render a JSON value with object keys in lexicographic order.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Parse an absolute http(s) URL with a host.
pub fn parse_http_url(raw: &str) -> Result<Url, String> {
    let url = Url::parse(raw).map_err(|e| format!("{raw:?} is not an absolute URL: {e}"))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(format!("{raw:?} must use http or https"));
    }
    if url.host_str().is_none() {
        return Err(format!("{raw:?} has no host"));
    }
    Ok(url)
}

/// Lowercase, split on every non-alphanumeric character, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_token_hex(s: &str) -> bool {
    s.len() == 32 && s.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<ContentHash>,
    pub hop_budget: u32,
    pub visited: Vec<String>,
}

impl SearchRequest {
    pub fn by_hash(hash: ContentHash, hop_budget: u32) -> Self {
        Self {
            query: None,
            hash: Some(hash),
            hop_budget,
            visited: Vec::new(),
        }
    }

    pub fn by_text(query: impl Into<String>, hop_budget: u32) -> Self {
        Self {
            query: Some(query.into()),
            hash: None,
            hop_budget,
            visited: Vec::new(),
        }
    }
}

impl WireMessage for SearchRequest {
    const TYPE_NAME: &'static str = "SearchRequest";

    fn check(&self) -> Result<(), String> {
        match (&self.query, &self.hash) {
            (Some(_), Some(_)) | (None, None) => {
                return Err("exactly one of query|hash".into());
            }
            (Some(q), None) if tokenize(q).is_empty() => {
                return Err("query must contain at least one alphanumeric token".into());
            }
            _ => {}
        }
        if self.hop_budget > MAX_HOP_BUDGET {
            return Err(format!("hop_budget must be <= {MAX_HOP_BUDGET}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerRef {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_probed_unix_s: Option<i64>,
}

impl ServerRef {
    pub fn unmeasured(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            latency_ms: None,
            throughput_bps: None,
            last_probed_unix_s: None,
        }
    }
}

impl WireMessage for ServerRef {
    const TYPE_NAME: &'static str = "ServerRef";

    fn check(&self) -> Result<(), String> {
        parse_http_url(&self.url)?;
        for (name, v) in [
            ("latency_ms", self.latency_ms),
            ("throughput_bps", self.throughput_bps),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("{name} must be a non-negative number"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub record: FileRecord,
    pub sources: Vec<ServerRef>,
    /// Other names under which the same content was reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_names: Vec<String>,
}

impl WireMessage for SearchHit {
    const TYPE_NAME: &'static str = "SearchHit";

    fn check(&self) -> Result<(), String> {
        self.record.validate().map_err(|e| e.to_string())?;
        if self.sources.is_empty() {
            return Err("sources must be non-empty".into());
        }
        self.sources.iter().try_for_each(ServerRef::check)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
    pub truncated: bool,
}

impl SearchResponse {
    pub fn empty() -> Self {
        Self {
            hits: Vec::new(),
            truncated: false,
        }
    }
}

impl WireMessage for SearchResponse {
    const TYPE_NAME: &'static str = "SearchResponse";

    fn check(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for hit in &self.hits {
            hit.check()?;
            for s in &hit.sources {
                if !seen.insert((hit.record.hash, s.url.as_str())) {
                    return Err(format!(
                        "duplicate (hash, server_url) pair ({}, {})",
                        hit.record.hash, s.url
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub token: String,
    pub download_url: String,
    pub expires_unix_s: i64,
}

impl WireMessage for TokenGrant {
    const TYPE_NAME: &'static str = "TokenGrant";

    fn check(&self) -> Result<(), String> {
        if !is_token_hex(&self.token) {
            return Err("token must be 32 lowercase hex characters".into());
        }
        let url = parse_http_url(&self.download_url)?;
        if !url.path().ends_with(&format!("/dl/{}", self.token)) {
            return Err("download_url path must end with /dl/{token}".into());
        }
        if self.expires_unix_s <= 0 {
            return Err("expires_unix_s must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncRecord {
    pub record: FileRecord,
    pub server_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub origin: String,
    pub records: Vec<SyncRecord>,
}

impl WireMessage for SyncBatch {
    const TYPE_NAME: &'static str = "SyncBatch";

    fn check(&self) -> Result<(), String> {
        if self.origin.is_empty() {
            return Err("origin must be non-empty".into());
        }
        if self.records.len() > SYNC_BATCH_CAP {
            return Err(format!(
                "batch holds {} records; cap is {SYNC_BATCH_CAP}",
                self.records.len()
            ));
        }
        for r in &self.records {
            r.record.validate().map_err(|e| e.to_string())?;
            parse_http_url(&r.server_url)?;
        }
        Ok(())
    }
}

impl WireMessage for FileRecord {
    const TYPE_NAME: &'static str = "FileRecord";

    fn check(&self) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())
    }
}

/// Body of `GET /api/v1/list`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileList(pub Vec<FileRecord>);

impl WireMessage for FileList {
    const TYPE_NAME: &'static str = "FileList";

    fn check(&self) -> Result<(), String> {
        self.0.iter().try_for_each(WireMessage::check)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub url: String,
}

impl WireMessage for RegisterRequest {
    const TYPE_NAME: &'static str = "RegisterRequest";

    fn check(&self) -> Result<(), String> {
        parse_http_url(&self.url).map(drop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlResult {
    pub files_indexed: u64,
    pub truncated: bool,
}

impl WireMessage for CrawlResult {
    const TYPE_NAME: &'static str = "CrawlResult";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncAck {
    pub accepted: u64,
}

impl WireMessage for SyncAck {
    const TYPE_NAME: &'static str = "SyncAck";
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeerRef {
    pub url: String,
    pub is_upstream: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerList {
    pub peers: Vec<PeerRef>,
}

impl WireMessage for PeerList {
    const TYPE_NAME: &'static str = "PeerList";

    fn check(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.peers {
            parse_http_url(&p.url)?;
            if !seen.insert(p.url.as_str()) {
                return Err(format!("duplicate peer {}", p.url));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexerInfo {
    pub name: String,
    pub version: String,
    pub entries: u64,
}

impl WireMessage for IndexerInfo {
    const TYPE_NAME: &'static str = "IndexerInfo";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub name: String,
    pub version: String,
    pub files: u64,
}

impl WireMessage for ServerInfo {
    const TYPE_NAME: &'static str = "ServerInfo";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub hash: ContentHash,
}

impl WireMessage for TokenRequest {
    const TYPE_NAME: &'static str = "TokenRequest";
}

/// Body of every non-2xx JSON response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            detail: detail.into(),
        }
    }
}

impl WireMessage for ErrorBody {
    const TYPE_NAME: &'static str = "ErrorBody";

    fn check(&self) -> Result<(), String> {
        if self.error.is_empty() {
            return Err("error code must be non-empty".into());
        }
        Ok(())
    }
}

/// Every message type [`normalize_named`] understands.
pub const WIRE_TYPES: &[&str] = &[
    "SearchRequest",
    "SearchResponse",
    "SearchHit",
    "ServerRef",
    "TokenGrant",
    "SyncBatch",
    "FileRecord",
    "FileList",
    "RegisterRequest",
    "CrawlResult",
    "SyncAck",
    "PeerList",
    "IndexerInfo",
    "ServerInfo",
    "TokenRequest",
    "ErrorBody",
];

/// Decode `text` as the wire type called `type_name` and re-encode it
/// canonically. Used by tooling that only knows the type at runtime.
pub fn normalize_named(text: &str, type_name: &str) -> Result<String, WireError> {
    fn go<T: WireMessage>(text: &str) -> Result<String, WireError> {
        encode(&decode::<T>(text)?)
    }
    match type_name {
        "SearchRequest" => go::<SearchRequest>(text),
        "SearchResponse" => go::<SearchResponse>(text),
        "SearchHit" => go::<SearchHit>(text),
        "ServerRef" => go::<ServerRef>(text),
        "TokenGrant" => go::<TokenGrant>(text),
        "SyncBatch" => go::<SyncBatch>(text),
        "FileRecord" => go::<FileRecord>(text),
        "FileList" => go::<FileList>(text),
        "RegisterRequest" => go::<RegisterRequest>(text),
        "CrawlResult" => go::<CrawlResult>(text),
        "SyncAck" => go::<SyncAck>(text),
        "PeerList" => go::<PeerList>(text),
        "IndexerInfo" => go::<IndexerInfo>(text),
        "ServerInfo" => go::<ServerInfo>(text),
        "TokenRequest" => go::<TokenRequest>(text),
        "ErrorBody" => go::<ErrorBody>(text),
        other => Err(WireError::UnknownType(other.to_string())),
    }
}
